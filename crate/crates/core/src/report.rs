//! Signed-intensity heatmaps for attribution maps.
//!
//! Positive scores render on a red scale and negative ones on a blue
//! scale. Intensities are normalized per row by the row's max |score|, so
//! they compare within a sentence but not across sentences.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::engine::AttributionMap;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to render")]
    Empty,
    #[error("{method} scores have length {scores}, sentence has {tokens} tokens")]
    Misaligned {
        method: String,
        scores: usize,
        tokens: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Html,
    Ansi,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "html" => Ok(Format::Html),
            "ansi" => Ok(Format::Ansi),
            other => Err(format!("unknown heatmap format {other:?}")),
        }
    }
}

/// One heatmap row: display tokens with their scores.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapDoc {
    pub tokens: Vec<String>,
    pub scores: Vec<f64>,
    /// Max |score|; zero for an all-zero row.
    pub normalization: f64,
    pub target_class: usize,
    pub method: String,
}

impl HeatmapDoc {
    pub fn new(map: &AttributionMap, tokens: &[String]) -> Result<Self, ReportError> {
        if map.len() != tokens.len() {
            return Err(ReportError::Misaligned {
                method: map.method.to_string(),
                scores: map.len(),
                tokens: tokens.len(),
            });
        }
        let normalization = map.scores.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        Ok(Self {
            tokens: tokens.to_vec(),
            scores: map.scores.clone(),
            normalization,
            target_class: map.target_class,
            method: map.method.to_string(),
        })
    }

    /// `score / max|score|` in [−1, 1]; 0 everywhere for an all-zero row.
    pub fn intensity(&self, i: usize) -> f64 {
        if self.normalization > 0.0 {
            (self.scores[i] / self.normalization).clamp(-1.0, 1.0)
        } else {
            0.0
        }
    }
}

/// Background colour for a signed intensity: white at 0, pure red at +1,
/// pure blue at −1.
pub fn rgb(intensity: f64) -> (u8, u8, u8) {
    let fade = (255.0 * (1.0 - intensity.abs())).round() as u8;
    if intensity > 0.0 {
        (255, fade, fade)
    } else if intensity < 0.0 {
        (fade, fade, 255)
    } else {
        (255, 255, 255)
    }
}

const RED_RAMP: [u8; 7] = [224, 217, 210, 203, 196, 160, 124];
const BLUE_RAMP: [u8; 7] = [189, 153, 117, 75, 33, 26, 19];

/// Step 0 (neutral) through 7 on the 8-step terminal ramp.
pub fn ansi_step(intensity: f64) -> usize {
    (intensity.abs() * 7.0).round() as usize
}

fn escape_html(s: &str, out: &mut String) {
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
}

fn html(rows: &[HeatmapDoc], provenance: Option<&str>) -> String {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Token attribution</title>\n</head>\n\
         <body style=\"font-family: sans-serif; line-height: 2.2;\">\n",
    );
    if let Some(p) = provenance {
        out.push_str("<!-- config: ");
        out.push_str(&p.replace("--", "- -"));
        out.push_str(" -->\n");
    }
    for row in rows {
        let _ = write!(
            out,
            "<div class=\"row\" data-method=\"{}\" data-target-class=\"{}\">\
             <span style=\"display: inline-block; min-width: 9em; font-weight: bold;\">{} &middot; class {}</span>",
            row.method, row.target_class, row.method, row.target_class
        );
        for (i, token) in row.tokens.iter().enumerate() {
            let t = row.intensity(i);
            let (r, g, b) = rgb(t);
            let _ = write!(
                out,
                "<span style=\"background: rgb({r}, {g}, {b}); padding: 2px 4px; margin: 1px;\" \
                 title=\"{:.6} bits\" data-intensity=\"{t}\">",
                row.scores[i]
            );
            escape_html(token, &mut out);
            out.push_str("</span>");
        }
        out.push_str("</div>\n");
    }
    out.push_str(
        "<p style=\"font-size: small; color: #555;\">Red: positive contribution, blue: negative. \
         Intensity is scaled per row by its max |score|:",
    );
    for row in rows {
        let _ = write!(out, " {}={:.6}", row.method, row.normalization);
    }
    out.push_str(" bits.</p>\n</body>\n</html>\n");
    out
}

fn ansi(rows: &[HeatmapDoc], provenance: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(p) = provenance {
        let _ = writeln!(out, "# config: {p}");
    }
    for row in rows {
        let _ = write!(
            out,
            "[{} class={} max|score|={:.6}]",
            row.method, row.target_class, row.normalization
        );
        for (i, token) in row.tokens.iter().enumerate() {
            let t = row.intensity(i);
            let step = ansi_step(t);
            out.push(' ');
            if step == 0 {
                out.push_str(token);
            } else {
                let code = if t > 0.0 {
                    RED_RAMP[step - 1]
                } else {
                    BLUE_RAMP[step - 1]
                };
                let _ = write!(out, "\x1b[38;5;16;48;5;{code}m{token}\x1b[0m");
            }
        }
        out.push('\n');
    }
    out
}

fn render(rows: &[HeatmapDoc], format: Format, provenance: Option<&str>) -> Vec<u8> {
    match format {
        Format::Html => html(rows, provenance),
        Format::Ansi => ansi(rows, provenance),
    }
    .into_bytes()
}

/// Renders one attribution map. `provenance`, when given, is embedded
/// verbatim (an HTML comment or a leading `# config:` line).
pub fn render_heatmap(
    map: &AttributionMap,
    tokens: &[String],
    format: Format,
    provenance: Option<&str>,
) -> Result<Vec<u8>, ReportError> {
    Ok(render(&[HeatmapDoc::new(map, tokens)?], format, provenance))
}

/// Stacked rows, one per map, all over the same sentence.
pub fn render_comparison(
    maps: &[AttributionMap],
    tokens: &[String],
    format: Format,
    provenance: Option<&str>,
) -> Result<Vec<u8>, ReportError> {
    if maps.is_empty() {
        return Err(ReportError::Empty);
    }
    let rows = maps
        .iter()
        .map(|m| HeatmapDoc::new(m, tokens))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(render(&rows, format, provenance))
}
