//! Hand-written SVG line charts.
//!
//! Prediction charts put stages on x and peak responses on y, one chart per
//! stimulus family. Line style encodes the target (dotted 31, solid 72; for
//! White's stimulus dotted is on-white, solid on-black) and the marker encodes
//! the inducer (square 12, diamond 102; squares throughout for White's).
//! Every marker carries its exact value in a `data-peak` attribute.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::experiment::{peaks_by_stimulus, Family, RunRecord, StimulusId};
use crate::orientation::Stage;
use crate::stimuli::Placement;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Square,
    Diamond,
    None,
}

#[derive(Debug, Clone)]
struct Series {
    label: String,
    dotted: bool,
    marker: Marker,
    points: Vec<(f64, f64)>,
}

fn style_for(id: &str) -> (bool, Marker) {
    match id.parse::<StimulusId>() {
        Ok(StimulusId::Grating {
            target, inducer, ..
        }) => (
            target == 31,
            if inducer == 12 {
                Marker::Square
            } else {
                Marker::Diamond
            },
        ),
        Ok(StimulusId::White(p)) => (p == Placement::OnWhite, Marker::Square),
        Err(_) => (false, Marker::None),
    }
}

fn family_of(id: &str) -> Option<Family> {
    id.parse::<StimulusId>().ok().map(|s| s.family())
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn nice_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    lo = lo.min(0.0);
    hi = hi.max(0.0);
    if hi - lo < 1e-300 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.08 * (hi - lo);
    (if lo < 0.0 { lo - pad } else { lo }, hi + pad)
}

/// Renders a chart. `x_labels` pairs each x value with its tick label.
fn render_chart(
    title: &str,
    x_title: &str,
    y_title: &str,
    x_labels: &[(f64, String)],
    series: &[Series],
) -> String {
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let (xmin, xmax) = {
        let xs = x_labels.iter().map(|(x, _)| *x);
        let lo = xs.clone().fold(f64::INFINITY, f64::min);
        let hi = xs.fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        }
    };
    let (ymin, ymax) = nice_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    // Fractional margin keeps end markers off the axes.
    let span = xmax - xmin;
    let (xmin, xmax) = (xmin - 0.08 * span, xmax + 0.08 * span);
    let sx = |x: f64| LEFT + (x - xmin) / (xmax - xmin) * pw;
    let sy = |y: f64| TOP + (ymax - y) / (ymax - ymin) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        LEFT + pw / 2.0,
        esc(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT},{TOP} V{} H{}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for (x, label) in x_labels {
        let px = sx(*x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 4.0,
            TOP + ph + 16.0,
            esc(label)
        );
    }
    for i in 0..=4 {
        let y = ymin + (ymax - ymin) * i as f64 / 4.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 4.0,
            LEFT - 6.0,
            py + 4.0,
            tick(y)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0,
        esc(x_title)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        esc(y_title)
    );

    for (k, ser) in series.iter().enumerate() {
        let dash = if ser.dotted {
            r#" stroke-dasharray="2,3""#
        } else {
            ""
        };
        let pts: Vec<String> = ser
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline data-series="{}" points="{}" fill="none" stroke="black" stroke-width="1.5"{dash}/>"#,
            esc(&ser.label),
            pts.join(" ")
        );
        for &(x, y) in &ser.points {
            marker(
                &mut s,
                ser.marker,
                sx(x),
                sy(y),
                &format!("{y}"),
                &ser.label,
            );
        }
        let ly = TOP + 10.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="black" stroke-width="1.5"{dash}/>"#,
            lx + 28.0
        );
        legend_marker(&mut s, ser.marker, lx + 14.0, ly);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 34.0,
            ly + 4.0,
            esc(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 1e4 {
        format!("{v:.2}")
    } else {
        format!("{v:.1e}")
    }
}

fn marker_shape(s: &mut String, m: Marker, x: f64, y: f64, attrs: &str) {
    let r = 4.0;
    match m {
        Marker::Square => {
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{}" height="{}" fill="white" stroke="black"{attrs}/>"#,
                x - r,
                y - r,
                2.0 * r,
                2.0 * r
            );
        }
        Marker::Diamond => {
            let _ = writeln!(
                s,
                r#"<polygon points="{:.2},{:.2} {:.2},{:.2} {:.2},{:.2} {:.2},{:.2}" fill="white" stroke="black"{attrs}/>"#,
                x,
                y - 1.3 * r,
                x + 1.3 * r,
                y,
                x,
                y + 1.3 * r,
                x - 1.3 * r,
                y
            );
        }
        Marker::None => {}
    }
}

fn marker(s: &mut String, m: Marker, x: f64, y: f64, value: &str, label: &str) {
    let attrs = format!(
        r#" class="point" data-series="{}" data-peak="{}""#,
        esc(label),
        value
    );
    if m == Marker::None {
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="1.5" fill="black"{attrs}/>"#
        );
    } else {
        marker_shape(s, m, x, y, &attrs);
    }
}

fn legend_marker(s: &mut String, m: Marker, x: f64, y: f64) {
    marker_shape(s, m, x, y, "");
}

fn write_svg(path: &Path, body: &str) -> std::io::Result<()> {
    fs::write(path, body)
}

/// One chart per stimulus family present in the record.
///
/// Returns the written paths; a record without stages writes nothing.
pub fn plot_predictions(record: &RunRecord, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    if record.stages.is_empty() || record.rows.is_empty() {
        log::warn!("record has no stages; no prediction charts written");
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir)?;
    let stage_x = |s: Stage| record.stages.iter().position(|&t| t == s).unwrap_or(0) as f64;
    let x_labels: Vec<(f64, String)> = record
        .stages
        .iter()
        .map(|&s| (stage_x(s), s.label().to_string()))
        .collect();

    let mut groups: Vec<(String, Vec<Series>)> = Vec::new();
    for (id, peaks) in peaks_by_stimulus(record) {
        let key = family_of(&id)
            .map(|f| f.name().to_string())
            .unwrap_or_else(|| "other".into());
        let (dotted, marker) = style_for(&id);
        let series = Series {
            label: id.clone(),
            dotted,
            marker,
            points: peaks.iter().map(|&(s, p)| (stage_x(s), p)).collect(),
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(series),
            None => groups.push((key, vec![series])),
        }
    }

    let mut paths = Vec::new();
    for (family, series) in groups {
        let title = format!("Condition {}: {family}", record.condition);
        let svg = render_chart(&title, "stage", "predicted response", &x_labels, &series);
        let path = dir.join(format!("predictions_{}_{family}.svg", record.condition));
        write_svg(&path, &svg)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Per stimulus: no-feedback, T1 and T2 combined profiles over orientation.
pub fn plot_orientation_profiles(record: &RunRecord, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut ids: Vec<&str> = record
        .rows
        .iter()
        .map(|r| r.stimulus_id.as_str())
        .chain(record.baselines.iter().map(|b| b.stimulus_id.as_str()))
        .collect();
    ids.sort();
    ids.dedup();
    if ids.is_empty() {
        log::warn!("record has no profiles; no orientation charts written");
        return Ok(Vec::new());
    }
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for id in ids {
        let mut series = Vec::new();
        let mut n = 0;
        if let Some(b) = record.baseline(id) {
            n = b.combined.profile.len();
            series.push(profile_series(
                "no feedback",
                false,
                Marker::None,
                b.combined.profile.values(),
            ));
        }
        for &stage in &record.stages {
            if let Some(r) = record.row(stage, id) {
                n = r.result.profile.len();
                let marker = match stage {
                    Stage::T1 => Marker::Diamond,
                    Stage::T2 => Marker::Square,
                };
                series.push(profile_series(
                    stage.label(),
                    true,
                    marker,
                    r.result.profile.values(),
                ));
            }
        }
        let step = 180.0 / n.max(1) as f64;
        let x_labels: Vec<(f64, String)> = (0..n)
            .step_by(if n > 6 { 2 } else { 1 })
            .map(|i| (i as f64 * step, format!("{}", i as f64 * step)))
            .collect();
        let title = format!("Condition {}: {id}", record.condition);
        let svg = render_chart(&title, "orientation (deg)", "response", &x_labels, &series);
        let path = dir.join(format!(
            "orientation_{}_{}.svg",
            record.condition,
            sanitize(id)
        ));
        write_svg(&path, &svg)?;
        paths.push(path);
    }
    Ok(paths)
}

fn profile_series(label: &str, dotted: bool, marker: Marker, values: &[f64]) -> Series {
    let step = 180.0 / values.len().max(1) as f64;
    Series {
        label: label.to_string(),
        dotted,
        marker,
        points: values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 * step, v))
            .collect(),
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
