use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use twopoint_core::data_io::{
    crop_scene, format_detections_dota, parse_dota_bytes, read_dataset, read_detections_jsonl, read_planes,
    synth_scene, tile_grid, write_atomic, write_detections_jsonl, write_planes, ClassTable, Dataset,
    DetectionRecord, SCENE_SCHEMA_VERSION,
};
use twopoint_core::decoder::Detection;
use twopoint_core::geometry::Point2;
use twopoint_core::simulation::{roundtrip_scene, RoundtripReport};
use twopoint_core::target_codec::Scene;
use twopoint_core::{decode, encode_scene, evaluate, merge_tiles, SceneF64};

use crate::config::{self, RunConfig};
use crate::{CliError, Command, Common};

type Res<T> = Result<T, CliError>;

pub fn run(cmd: Command) -> Res<()> {
    match cmd {
        Command::Encode {
            input,
            out,
            image_size,
            lenient,
            encoder,
            common,
        } => {
            let mut cfg = config::load(common.config.as_deref())?;
            encoder.apply(&mut cfg.encoder);
            cmd_encode(&input, &out, image_size.as_deref(), lenient, cfg, &common)
        }
        Command::Decode {
            planes,
            out,
            dota,
            tiles,
            decoder,
            common,
        } => {
            let mut cfg = config::load(common.config.as_deref())?;
            decoder.apply(&mut cfg.decoder);
            cmd_decode(&planes, &out, dota.as_deref(), tiles.as_deref(), cfg, &common)
        }
        Command::Roundtrip {
            seed,
            count,
            out,
            peak_jitter,
            jitter_min_aspect,
            direction_noise,
            min_iou,
            max_direction_err,
            report_only,
            encoder,
            decoder,
            synth,
            common,
        } => {
            let mut cfg = config::load(common.config.as_deref())?;
            encoder.apply(&mut cfg.encoder);
            decoder.apply(&mut cfg.decoder);
            synth.apply(&mut cfg.synth);
            if let Some(v) = seed {
                cfg.seed = v;
            }
            if let Some(v) = peak_jitter {
                cfg.perturbation.peak_jitter = v;
            }
            if let Some(v) = jitter_min_aspect {
                cfg.perturbation.jitter_min_aspect = v;
            }
            if let Some(v) = direction_noise {
                cfg.perturbation.direction_noise_deg = v;
            }
            if let Some(v) = min_iou {
                cfg.min_iou = v;
            }
            if let Some(v) = max_direction_err {
                cfg.max_direction_err = v;
            }
            cmd_roundtrip(count, out.as_deref(), report_only, cfg, &common)
        }
        Command::Eval {
            dets,
            gt,
            out,
            table,
            eval,
            common,
        } => {
            let mut cfg = config::load(common.config.as_deref())?;
            eval.apply(&mut cfg.eval);
            cmd_eval(&dets, &gt, out.as_deref(), table.as_deref(), cfg)
        }
        Command::Tile {
            input,
            out,
            tile_size,
            gap,
            common,
        } => {
            let mut cfg = config::load(common.config.as_deref())?;
            if let Some(v) = tile_size {
                cfg.tile_size = v;
            }
            if let Some(v) = gap {
                cfg.gap = v;
            }
            cmd_tile(&input, &out, cfg)
        }
        Command::Render {
            planes,
            out,
            plane,
            common,
        } => {
            let cfg = config::load(common.config.as_deref())?;
            cmd_render(&planes, &out, &plane, cfg)
        }
        Command::Synth {
            seed,
            count,
            out,
            synth,
            common,
        } => {
            let mut cfg = config::load(common.config.as_deref())?;
            synth.apply(&mut cfg.synth);
            if let Some(v) = seed {
                cfg.seed = v;
            }
            cmd_synth(count, &out, cfg)
        }
    }
}

fn pool(common: &Common) -> Res<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.jobs.max(1))
        .build()
        .map_err(|e| CliError::Input(format!("cannot start worker pool: {e}")))
}

fn to_pretty<T: Serialize>(v: &T) -> Res<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Res<()> {
    write_atomic(path, to_pretty(v)?.as_bytes())?;
    Ok(())
}

/// Prints the run summary, including the resolved configuration.
fn echo(command: &str, cfg: &RunConfig, result: serde_json::Value) -> Res<()> {
    print!("{}", to_pretty(&json!({ "command": command, "config": cfg, "result": result }))?);
    Ok(())
}

fn class_table(cfg: &RunConfig, from_input: &[String], fallback: ClassTable) -> ClassTable {
    if !cfg.classes.is_empty() {
        ClassTable::new(cfg.classes.clone())
    } else if !from_input.is_empty() {
        ClassTable::new(from_input.to_vec())
    } else {
        fallback
    }
}

fn generic_table(n: usize) -> ClassTable {
    ClassTable::new((0..n.max(1)).map(|i| format!("class{i}")))
}

fn parse_size(s: &str) -> Res<(usize, usize)> {
    let bad = || CliError::Input(format!("image size must look like 1024x768, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let w = w.trim().parse().map_err(|_| bad())?;
    let h = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn is_dota(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("txt"))
}

fn read_input(
    path: &Path,
    image_size: Option<&str>,
    lenient: bool,
    cfg: &RunConfig,
) -> Res<(ClassTable, Vec<(String, SceneF64)>)> {
    if is_dota(path) {
        let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let table = class_table(cfg, &[], ClassTable::default());
        let parsed = parse_dota_bytes::<f64>(&bytes, &table);
        for d in &parsed.diagnostics {
            eprintln!("{}: {}", path.display(), serde_json::to_string(d)?);
        }
        if !parsed.diagnostics.is_empty() && !lenient {
            return Err(CliError::Input(format!(
                "{}: {} malformed annotation line(s)",
                path.display(),
                parsed.diagnostics.len()
            )));
        }
        let (w, h) = match image_size {
            Some(s) => parse_size(s)?,
            None => parsed.extent(),
        };
        let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
        return Ok((table, vec![(id, parsed.into_scene(w, h))]));
    }
    let ds = read_dataset(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let scenes = ds.scenes::<f64>();
    let max_class = scenes
        .iter()
        .flat_map(|(_, s)| s.annotations.iter().map(|a| a.class_id() + 1))
        .max()
        .unwrap_or(1);
    let table = class_table(cfg, &ds.classes, generic_table(max_class));
    Ok((table, scenes))
}

fn check_ids(scenes: &[(String, SceneF64)]) -> Res<()> {
    let mut seen = std::collections::BTreeSet::new();
    for (id, _) in scenes {
        if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
            return Err(CliError::Input(format!("image id {id:?} is not usable as a directory name")));
        }
        if !seen.insert(id.as_str()) {
            return Err(CliError::Input(format!("duplicate image id {id:?}")));
        }
    }
    Ok(())
}

fn cmd_encode(
    input: &Path,
    out: &Path,
    image_size: Option<&str>,
    lenient: bool,
    mut cfg: RunConfig,
    common: &Common,
) -> Res<()> {
    let (table, scenes) = read_input(input, image_size, lenient, &cfg)?;
    check_ids(&scenes)?;
    cfg.classes = table.names.clone();
    cfg.encoder.num_classes = cfg.encoder.num_classes.max(table.len());
    cfg.encoder.validate()?;
    let echo_cfg = serde_json::to_value(&cfg)?;
    let results: Vec<Res<(String, usize)>> = pool(common)?.install(|| {
        scenes
            .par_iter()
            .map(|(id, scene)| {
                let maps = encode_scene(scene, &cfg.encoder)?;
                for w in &maps.warnings {
                    eprintln!("{id}: {}", serde_json::to_string(w)?);
                }
                let n = maps.warnings.len();
                write_planes(&maps, &out.join(id), echo_cfg.clone())?;
                Ok((id.clone(), n))
            })
            .collect()
    });
    let mut images = Vec::new();
    for r in results {
        let (id, warnings) = r?;
        images.push(json!({ "id": id, "dir": out.join(&id), "warnings": warnings }));
    }
    echo("encode", &cfg, json!({ "images": images }))
}

/// Plane directories under `dir`, keyed by image id.
fn plane_dirs(dir: &Path) -> Res<Vec<(String, PathBuf)>> {
    if dir.join("planes.json").is_file() {
        let id = dir.file_name().and_then(|s| s.to_str()).unwrap_or("image").to_string();
        return Ok(vec![(id, dir.to_path_buf())]);
    }
    let mut out = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    for e in entries {
        let p = e?.path();
        if p.join("planes.json").is_file() {
            if let Some(id) = p.file_name().and_then(|s| s.to_str()) {
                out.push((id.to_string(), p.clone()));
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Input(format!("no plane files found under {}", dir.display())));
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileEntry {
    pub id: String,
    pub image: String,
    pub origin: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileManifest {
    pub schema_version: u32,
    pub tile_size: usize,
    pub gap: usize,
    pub tiles: Vec<TileEntry>,
}

fn cmd_decode(
    planes: &Path,
    out: &Path,
    dota: Option<&Path>,
    tiles: Option<&Path>,
    cfg: RunConfig,
    common: &Common,
) -> Res<()> {
    cfg.decoder.validate()?;
    let dirs = plane_dirs(planes)?;
    let decoded: Vec<Res<(String, Vec<Detection<f64>>, Vec<String>)>> = pool(common)?.install(|| {
        dirs.par_iter()
            .map(|(id, dir)| {
                let (maps, sidecar) = read_planes(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
                let classes = sidecar
                    .config
                    .get("classes")
                    .and_then(|c| serde_json::from_value::<Vec<String>>(c.clone()).ok())
                    .unwrap_or_default();
                Ok((id.clone(), decode(&maps.cast::<f64>(), &cfg.decoder)?, classes))
            })
            .collect()
    });
    let mut per_image: Vec<(String, Vec<Detection<f64>>)> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for r in decoded {
        let (id, dets, classes) = r?;
        if names.is_empty() {
            names = classes;
        }
        per_image.push((id, dets));
    }

    if let Some(path) = tiles {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let manifest: TileManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let by_id: BTreeMap<&str, &Vec<Detection<f64>>> = per_image.iter().map(|(i, d)| (i.as_str(), d)).collect();
        let mut groups: BTreeMap<&str, Vec<(Point2<f64>, Vec<Detection<f64>>)>> = BTreeMap::new();
        for t in &manifest.tiles {
            let dets = by_id
                .get(t.id.as_str())
                .ok_or_else(|| CliError::Input(format!("no planes for tile {:?}", t.id)))?;
            let origin = Point2::new(t.origin[0] as f64, t.origin[1] as f64);
            groups.entry(&t.image).or_default().push((origin, (*dets).clone()));
        }
        per_image = groups
            .into_iter()
            .map(|(image, tiles)| (image.to_string(), merge_tiles(&tiles, &cfg.decoder)))
            .collect();
    }

    let records: Vec<DetectionRecord> = per_image
        .iter()
        .flat_map(|(id, dets)| dets.iter().map(move |d| DetectionRecord::from_detection(id, d)))
        .collect();
    write_atomic(out, write_detections_jsonl(&records)?.as_bytes())?;
    if let Some(p) = dota {
        let max_class = records.iter().map(|r| r.class + 1).max().unwrap_or(1);
        let table = class_table(&cfg, &names, generic_table(max_class));
        write_atomic(p, format_detections_dota(&records, &table).as_bytes())?;
    }
    let counts: Vec<_> = per_image.iter().map(|(id, d)| json!({ "id": id, "detections": d.len() })).collect();
    echo("decode", &cfg, json!({ "images": counts, "detections": records.len() }))
}

fn cmd_roundtrip(count: usize, out: Option<&Path>, report_only: bool, cfg: RunConfig, common: &Common) -> Res<()> {
    cfg.encoder.validate()?;
    cfg.decoder.validate()?;
    cfg.synth.validate()?;
    let outcomes: Vec<Res<_>> = pool(common)?.install(|| {
        (0..count as u64)
            .into_par_iter()
            .map(|k| {
                let seed = cfg.seed.wrapping_add(k);
                let scene = synth_scene::<f64>(seed, &cfg.synth)?;
                Ok(roundtrip_scene(&scene, &config_for(&cfg), seed)?)
            })
            .collect()
    });
    let outcomes = outcomes.into_iter().collect::<Res<Vec<_>>>()?;
    let report = RoundtripReport::from_outcomes(&outcomes, cfg.min_iou, cfg.max_direction_err);
    let doc = json!({ "config": cfg, "report": report });
    if let Some(p) = out {
        write_json(p, &doc)?;
    }
    echo("roundtrip", &cfg, serde_json::to_value(&report)?)?;
    if !report.passed() && !report_only {
        return Err(CliError::Threshold(format!(
            "{} of {} instances below thresholds, {} spurious detections",
            report.failures, report.instances, report.spurious
        )));
    }
    Ok(())
}

fn config_for(cfg: &RunConfig) -> twopoint_core::simulation::RoundtripConfig {
    twopoint_core::simulation::RoundtripConfig {
        encoder: cfg.encoder,
        decoder: cfg.decoder,
        synth: cfg.synth.clone(),
        perturbation: cfg.perturbation,
        min_iou: cfg.min_iou,
        max_direction_err: cfg.max_direction_err,
    }
}

fn cmd_eval(dets: &Path, gt: &Path, out: Option<&Path>, table: Option<&Path>, mut cfg: RunConfig) -> Res<()> {
    cfg.eval.validate()?;
    let text = std::fs::read_to_string(dets).map_err(|e| CliError::Input(format!("{}: {e}", dets.display())))?;
    let records = read_detections_jsonl(&text).map_err(|e| CliError::Input(format!("{}: {e}", dets.display())))?;
    let ds = read_dataset(gt).map_err(|e| CliError::Input(format!("{}: {e}", gt.display())))?;
    let gts: Vec<(String, Vec<_>)> = ds.scenes::<f64>().into_iter().map(|(id, s)| (id, s.annotations)).collect();
    let mut grouped: BTreeMap<String, Vec<Detection<f64>>> = BTreeMap::new();
    for r in &records {
        grouped.entry(r.image.clone()).or_default().push(r.to_detection());
    }
    let grouped: Vec<_> = grouped.into_iter().collect();
    let report = evaluate(&grouped, &gts, &cfg.eval)?;
    if cfg.classes.is_empty() {
        cfg.classes = ds.classes.clone();
    }
    if let Some(p) = out {
        write_json(p, &json!({ "config": cfg, "report": report }))?;
    }
    let text_table = report.to_table(&cfg.classes);
    if let Some(p) = table {
        write_atomic(p, text_table.as_bytes())?;
    }
    eprint!("{text_table}");
    echo("eval", &cfg, json!({ "map": report.map, "classes": report.per_class.len() }))
}

fn cmd_tile(input: &Path, out: &Path, mut cfg: RunConfig) -> Res<()> {
    let (table, scenes) = read_input(input, None, false, &cfg)?;
    cfg.classes = table.names.clone();
    let mut ds = Dataset::new(&table);
    let mut manifest = TileManifest {
        schema_version: SCENE_SCHEMA_VERSION,
        tile_size: cfg.tile_size,
        gap: cfg.gap,
        tiles: Vec::new(),
    };
    for (id, scene) in &scenes {
        let grid = tile_grid(scene.image_width, scene.image_height, cfg.tile_size, cfg.gap)?;
        for &(x, y) in &grid.origins {
            let (tile, dropped) = crop_scene(scene, (x, y), (cfg.tile_size, cfg.tile_size), 0.5);
            for d in dropped {
                eprintln!("{id} tile ({x}, {y}): {}", serde_json::to_string(&d)?);
            }
            let tile_id = format!("{id}_{x}_{y}");
            ds.push(tile_id.clone(), &tile);
            manifest.tiles.push(TileEntry {
                id: tile_id,
                image: id.clone(),
                origin: [x, y],
            });
        }
    }
    write_json(&out.join("tiles.json"), &ds)?;
    write_json(&out.join("manifest.json"), &manifest)?;
    echo("tile", &cfg, json!({ "images": scenes.len(), "tiles": manifest.tiles.len() }))
}

/// Binary PGM of one channel, values mapped linearly from `[0, 1]` to
/// `[0, 255]`.
pub fn pgm(data: &[f32], width: usize, height: usize) -> Vec<u8> {
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(data.iter().map(|&v| {
        let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
        (v * 255.0).round() as u8
    }));
    bytes
}

fn cmd_render(planes: &Path, out: &Path, plane: &str, cfg: RunConfig) -> Res<()> {
    let (maps, _) = read_planes(planes).map_err(|e| CliError::Input(format!("{}: {e}", planes.display())))?;
    let p = maps
        .planes()
        .into_iter()
        .find(|(n, _)| *n == plane)
        .map(|(_, p)| p.clone())
        .ok_or_else(|| CliError::Input(format!("unknown plane {plane:?}")))?;
    let mut files = Vec::new();
    for c in 0..p.channels {
        let path = out.join(format!("{plane}_c{c}.pgm"));
        write_atomic(&path, &pgm(p.channel(c), p.width, p.height))?;
        files.push(path);
    }
    echo("render", &cfg, json!({ "files": files }))
}

fn cmd_synth(count: usize, out: &Path, mut cfg: RunConfig) -> Res<()> {
    cfg.synth.validate()?;
    let table = class_table(&cfg, &[], generic_table(cfg.synth.num_classes));
    cfg.classes = table.names.clone();
    let mut ds = Dataset::new(&table);
    let mut instances = 0;
    for k in 0..count as u64 {
        let seed = cfg.seed.wrapping_add(k);
        let scene: Scene<f64> = synth_scene(seed, &cfg.synth)?;
        instances += scene.annotations.len();
        ds.push(format!("scene_{seed:06}"), &scene);
    }
    write_json(out, &ds)?;
    echo("synth", &cfg, json!({ "images": count, "instances": instances }))
}
