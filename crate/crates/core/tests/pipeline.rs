use twopoint_core::data_io::{
    format_dota, letterbox, parse_dota, read_detections_jsonl, read_planes, synth_scene, write_detections_jsonl,
    write_planes, ClassTable, DetectionRecord, SynthSpec,
};
use twopoint_core::{
    decode, encode_scene, evaluate, unletterbox, ApMethod, DecodeConfig, EncoderConfig, EvalConfig, SceneF64,
};

const DOTA: &str = "imagesource:GoogleEarth\ngsd:0.15\n\
100 100 180 100 180 124 100 124 large-vehicle 0\n\
300 200 316 200 316 296 300 296 ship 1\n\
420 420 460 380 480 400 440 440 plane 0\n";

#[test]
fn dota_text_to_ap() {
    let classes = ClassTable::default();
    let parsed = parse_dota::<f64>(DOTA, &classes);
    assert!(parsed.diagnostics.is_empty());
    let scene: SceneF64 = parsed.into_scene(512, 512);
    assert_eq!(scene.annotations.len(), 3);

    let enc = EncoderConfig {
        num_classes: classes.len(),
        ..Default::default()
    };
    let maps = encode_scene(&scene, &enc).unwrap();
    let dets = decode(&maps, &DecodeConfig::default()).unwrap();
    assert_eq!(dets.len(), 3);

    let gts = vec![("img".to_string(), scene.annotations.clone())];
    let by_image = vec![("img".to_string(), dets)];
    for m in [ApMethod::Voc07, ApMethod::Continuous] {
        let cfg = EvalConfig {
            iou_threshold: 0.5,
            ap_method: m,
        };
        assert_eq!(evaluate(&by_image, &gts, &cfg).unwrap().map, Some(1.0));
    }
}

#[test]
fn dota_format_parse_is_stable() {
    let classes = ClassTable::default();
    let scene = parse_dota::<f64>(DOTA, &classes).into_scene(512, 512);
    let text = format_dota(&scene, &classes);
    let again = parse_dota::<f64>(&text, &classes).into_scene(512, 512);
    assert_eq!(format_dota(&again, &classes), text);
}

#[test]
fn planes_and_detections_survive_files() {
    let dir = tempfile::tempdir().unwrap();
    let scene = synth_scene::<f64>(11, &SynthSpec::default()).unwrap();
    let maps = encode_scene(&scene, &EncoderConfig::default()).unwrap();
    write_planes(&maps.cast::<f32>(), dir.path(), serde_json::Value::Null).unwrap();
    let (back, sidecar) = read_planes(dir.path()).unwrap();
    assert_eq!(sidecar.grid_width, maps.grid_width());

    let dets = decode(&back.cast::<f64>(), &DecodeConfig::default()).unwrap();
    assert_eq!(dets.len(), scene.annotations.len());
    let records: Vec<_> = dets.iter().map(|d| DetectionRecord::from_detection("s", d)).collect();
    let parsed = read_detections_jsonl(&write_detections_jsonl(&records).unwrap()).unwrap();
    assert_eq!(parsed, records);
}

#[test]
fn f32_pipeline_recovers_boxes() {
    let scene = synth_scene::<f32>(5, &SynthSpec::default()).unwrap();
    let maps = encode_scene(&scene, &EncoderConfig::<f32>::default()).unwrap();
    let dets = decode(&maps, &DecodeConfig::<f32>::default()).unwrap();
    assert_eq!(dets.len(), scene.annotations.len());
    for a in &scene.annotations {
        let best = dets
            .iter()
            .map(|d| twopoint_core::rotated_iou(&a.quad, &d.quad).unwrap().iou)
            .fold(0.0f32, f32::max);
        assert!(best > 0.95, "{best}");
    }
}

#[test]
fn letterboxed_detections_map_back() {
    let classes = ClassTable::default();
    let scene = parse_dota::<f64>(DOTA, &classes).into_scene(1024, 512);
    let t = letterbox(1024, 512, 512, 512).unwrap();
    let mut boxed = scene.clone();
    boxed.image_width = 512;
    boxed.image_height = 512;
    for a in &mut boxed.annotations {
        a.quad = a.quad.map_points(|p| t.apply(p));
    }
    let enc = EncoderConfig {
        num_classes: classes.len(),
        ..Default::default()
    };
    let dets = decode(&encode_scene(&boxed, &enc).unwrap(), &DecodeConfig::default()).unwrap();
    let restored = unletterbox(&dets, &t);
    for a in &scene.annotations {
        let best = restored
            .iter()
            .map(|d| twopoint_core::rotated_iou(&a.quad, &d.quad).unwrap().iou)
            .fold(0.0, f64::max);
        assert!(best > 0.95, "{best}");
    }
}
