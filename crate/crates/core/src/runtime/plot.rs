use std::fmt::Write;

use super::LogRecord;
use crate::error::{Error, Result};

/// Horizontal axis of a learning curve.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum XAxis {
    ActorSteps,
    LearnerWalltime,
}

impl XAxis {
    pub fn label(self) -> &'static str {
        match self {
            XAxis::ActorSteps => "actor steps",
            XAxis::LearnerWalltime => "learner walltime (s)",
        }
    }
}

impl std::str::FromStr for XAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "actor_steps" => Ok(XAxis::ActorSteps),
            "learner_walltime" => Ok(XAxis::LearnerWalltime),
            other => Err(Error::Config(format!("unknown x-axis '{other}' (expected actor_steps or learner_walltime)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePoint {
    pub x: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Number of runs contributing to this point.
    pub runs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

/// Mean and range of evaluation returns across runs of one configuration.
///
/// On the actor-step axis, points are matched by exact step count. Learner
/// walltime differs between runs, so there the k-th evaluation of each run
/// is matched and `x` is the mean walltime of those evaluations.
pub fn aggregate(label: &str, runs: &[Vec<LogRecord>], axis: XAxis) -> Curve {
    let evaluated: Vec<Vec<&LogRecord>> = runs.iter().map(|r| r.iter().filter(|x| x.eval_return.is_some()).collect()).collect();
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    match axis {
        XAxis::ActorSteps => {
            let mut steps: Vec<u64> = evaluated.iter().flatten().map(|r| r.actor_steps).collect();
            steps.sort_unstable();
            steps.dedup();
            for s in steps {
                let ys = evaluated.iter().flatten().filter(|r| r.actor_steps == s).filter_map(|r| r.eval_return).collect();
                groups.push((s as f64, ys));
            }
        }
        XAxis::LearnerWalltime => {
            let longest = evaluated.iter().map(Vec::len).max().unwrap_or(0);
            for k in 0..longest {
                let at: Vec<&LogRecord> = evaluated.iter().filter_map(|r| r.get(k).copied()).collect();
                let x = at.iter().map(|r| r.learner_walltime_s).sum::<f64>() / at.len() as f64;
                groups.push((x, at.iter().filter_map(|r| r.eval_return).collect()));
            }
        }
    }
    let points = groups
        .into_iter()
        .map(|(x, ys)| CurvePoint {
            x,
            mean: ys.iter().sum::<f64>() / ys.len() as f64,
            min: ys.iter().copied().fold(f64::INFINITY, f64::min),
            max: ys.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            runs: ys.len(),
        })
        .collect();
    Curve { label: label.to_string(), points }
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Self-contained SVG line chart: one mean line per curve over a shaded
/// min-max band.
pub fn render_svg(curves: &[Curve], axis: XAxis) -> String {
    let points = curves.iter().flat_map(|c| &c.points);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.min);
        y1 = y1.max(p.max);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        (y0, y1) = (y0 - 0.5, y1 + 0.5);
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(svg, r#"<path d="M{left},{top} L{left},{bottom} L{right},{bottom}" stroke="black" fill="none"/>"#);
    for (value, anchor, x) in [(x0, "start", left), (x1, "end", right)] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="{anchor}">{}</text>"#, bottom + 16.0, tick(value));
    }
    for (value, y) in [(y0, bottom), (y1, top)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, left - 6.0, tick(value));
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, axis.label());
    let _ = writeln!(svg, r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">evaluation return</text>"#, HEIGHT / 2.0, HEIGHT / 2.0);
    for (i, c) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if c.points.is_empty() {
            continue;
        }
        let upper = c.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.max)));
        let lower = c.points.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.min)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = c.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.x), sy(p.mean))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, left + 8.0, escape(&c.label));
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v.abs() >= 1000.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
