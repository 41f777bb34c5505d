//! DOTA text annotations.
//!
//! One object per line: `x1 y1 x2 y2 x3 y3 x4 y4 class [difficult]`,
//! separated by ASCII whitespace. Lines starting with `imagesource:` or
//! `gsd:` are metadata, blank lines are ignored.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Diagnostic;
use crate::geometry::RotatedQuad;
use crate::scalar::Real;
use crate::target_codec::{Annotation, Scene};

pub const DOTA_CLASSES: [&str; 15] = [
    "plane",
    "ship",
    "storage-tank",
    "baseball-diamond",
    "tennis-court",
    "basketball-court",
    "ground-track-field",
    "harbor",
    "bridge",
    "large-vehicle",
    "small-vehicle",
    "helicopter",
    "roundabout",
    "soccer-ball-field",
    "swimming-pool",
];

/// Class name to id lookup. Ids follow table order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTable {
    pub names: Vec<String>,
}

impl Default for ClassTable {
    fn default() -> Self {
        Self::new(DOTA_CLASSES)
    }
}

impl ClassTable {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        Self {
            names: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DotaParse<T> {
    pub annotations: Vec<Annotation<T>>,
    /// 1-based source line of each annotation.
    pub lines: Vec<usize>,
    pub diagnostics: Vec<Diagnostic>,
    pub image_source: Option<String>,
    pub gsd: Option<String>,
}

impl<T: Real> DotaParse<T> {
    /// Wraps the annotations in a scene of the given size.
    pub fn into_scene(self, image_width: usize, image_height: usize) -> Scene<T> {
        Scene {
            image_width,
            image_height,
            annotations: self.annotations,
        }
    }

    /// Smallest integer image size containing every annotation.
    pub fn extent(&self) -> (usize, usize) {
        let mut w = T::one();
        let mut h = T::one();
        for a in &self.annotations {
            let (_, hi) = a.quad.bounds();
            w = w.max(hi.x);
            h = h.max(hi.y);
        }
        (
            w.ceil().to_usize().unwrap_or(1).max(1),
            h.ceil().to_usize().unwrap_or(1).max(1),
        )
    }
}

pub fn parse_dota_bytes<T: Real>(bytes: &[u8], classes: &ClassTable) -> DotaParse<T> {
    parse_dota(&String::from_utf8_lossy(bytes), classes)
}

pub fn parse_dota<T: Real>(text: &str, classes: &ClassTable) -> DotaParse<T> {
    let mut out = DotaParse {
        annotations: Vec::new(),
        lines: Vec::new(),
        diagnostics: Vec::new(),
        image_source: None,
        gsd: None,
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(v) = trimmed.strip_prefix("imagesource:") {
            out.image_source = Some(v.trim().to_string());
            continue;
        }
        if let Some(v) = trimmed.strip_prefix("gsd:") {
            out.gsd = Some(v.trim().to_string());
            continue;
        }
        match parse_line::<T>(trimmed, line, classes) {
            Ok(a) => {
                out.annotations.push(a);
                out.lines.push(line);
            }
            Err(d) => out.diagnostics.push(d),
        }
    }
    out
}

fn parse_line<T: Real>(text: &str, line: usize, classes: &ClassTable) -> Result<Annotation<T>, Diagnostic> {
    let tokens: Vec<&str> = text.split_ascii_whitespace().collect();
    if tokens.len() != 9 && tokens.len() != 10 {
        return Err(Diagnostic::ParseError {
            line,
            message: format!("expected 9 or 10 tokens, found {}", tokens.len()),
        });
    }
    let mut coords = [T::zero(); 8];
    for (k, tok) in tokens[..8].iter().enumerate() {
        let v: f64 = tok.parse().map_err(|_| Diagnostic::ParseError {
            line,
            message: format!("coordinate {} is not a number: {tok:?}", k + 1),
        })?;
        if !v.is_finite() {
            return Err(Diagnostic::ParseError {
                line,
                message: format!("coordinate {} is not finite: {tok:?}", k + 1),
            });
        }
        coords[k] = T::from_f64(v).unwrap_or_else(T::nan);
    }
    let class_token = tokens[8];
    let class_id = classes.id(class_token).ok_or_else(|| Diagnostic::UnknownClass {
        line,
        token: class_token.to_string(),
    })?;
    let difficult = match tokens.get(9) {
        None | Some(&"0") => false,
        Some(&"1") => true,
        Some(other) => {
            return Err(Diagnostic::ParseError {
                line,
                message: format!("difficulty flag must be 0 or 1, found {other:?}"),
            })
        }
    };
    let quad = RotatedQuad::from_coords(coords, class_id);
    quad.validate().map_err(|e| Diagnostic::DegenerateBox {
        line,
        message: e.to_string(),
    })?;
    Ok(Annotation { quad, difficult })
}

/// Serializes a scene as DOTA text. Coordinates use the shortest
/// representation that parses back to the same value.
pub fn format_dota<T: Real>(scene: &Scene<T>, classes: &ClassTable) -> String {
    let mut s = String::new();
    for a in &scene.annotations {
        for v in a.quad.coords() {
            let _ = write!(s, "{} ", v.to_f64_lossy());
        }
        let name = classes.name(a.class_id()).map(str::to_string).unwrap_or_else(|| format!("class{}", a.class_id()));
        let _ = writeln!(s, "{name} {}", u8::from(a.difficult));
    }
    s
}
