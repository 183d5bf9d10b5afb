//! Minimal SVG line plots.

use std::fmt::Write as _;

use crate::distill::{RunLog, TrajectoryPoint};
use crate::linalg::{axpy, dot, normalize};

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 48.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Draw a marker at every point.
    pub markers: bool,
}

fn fmt(x: f64) -> String {
    format!("{x:.2}")
}

/// Line plot of every series on shared axes. Non-finite points are dropped.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts() {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ =
        writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let (l, r, t, b) = (PAD, W - PAD, PAD, H - PAD);
    let _ = writeln!(out, r#"<polyline points="{l},{t} {l},{b} {r},{b}" fill="none" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 10.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (v, x) in [(x0, l), (x1, r)] {
        let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, b + 14.0, fmt(v));
    }
    for (v, y) in [(y0, b), (y1, t)] {
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end">{}</text>"#, l - 4.0, fmt(v));
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{},{}", fmt(sx(x)), fmt(sy(y))))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
        if s.markers {
            for c in &coords {
                let (cx, cy) = c.split_once(',').unwrap_or(("0", "0"));
                let _ = writeln!(out, r#"<circle cx="{cx}" cy="{cy}" r="2" fill="{color}"/>"#);
            }
        }
        let ly = t + 14.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, r - 120.0, ly - 9.0);
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, r - 106.0, escape(&s.label));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Top two principal directions of `rows` by deflated power iteration from
/// a fixed start.
fn principal_axes(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let dim = rows.first().map_or(0, Vec::len);
    let n = rows.len().max(1) as f64;
    let mut mean = vec![0.0; dim];
    for r in rows {
        axpy(1.0 / n, r, &mut mean);
    }
    let centred: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(a, b)| a - b).collect()).collect();
    let mut axes: Vec<Vec<f64>> = Vec::new();
    for k in 0..2 {
        let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + ((i * (k + 3)) % 7) as f64).collect();
        normalize(&mut v);
        for _ in 0..100 {
            let mut next = vec![0.0; dim];
            for c in &centred {
                axpy(dot(c, &v), c, &mut next);
            }
            for a in &axes {
                let p = dot(&next, a);
                axpy(-p, a, &mut next);
            }
            if normalize(&mut next) == 0.0 {
                break;
            }
            v = next;
        }
        axes.push(v);
    }
    (mean, axes)
}

/// 2D projection of every particle's render trajectory.
pub fn trajectory_svg(title: &str, trajectory: &[TrajectoryPoint]) -> String {
    let rows: Vec<Vec<f64>> = trajectory.iter().flat_map(|p| p.renders.iter().cloned()).collect();
    let (mean, axes) = principal_axes(&rows);
    let particles = trajectory.first().map_or(0, |p| p.renders.len());
    let series: Vec<Series> = (0..particles)
        .map(|i| Series {
            label: format!("particle {i}"),
            points: trajectory
                .iter()
                .map(|p| {
                    let c: Vec<f64> = p.renders[i].iter().zip(&mean).map(|(a, b)| a - b).collect();
                    (dot(&c, &axes[0]), dot(&c, &axes[1]))
                })
                .collect(),
            markers: true,
        })
        .collect();
    line_plot(title, "component 1", "component 2", &series)
}

/// Prior and asset velocity norms per particle over iterations.
pub fn velocity_svg(title: &str, log: &RunLog) -> String {
    let particles = log.rows.iter().map(|r| r.particle + 1).max().unwrap_or(0);
    let mut series = Vec::new();
    for i in 0..particles {
        let rows = log.rows.iter().filter(|r| r.particle == i);
        series.push(Series {
            label: format!("v2d p{i}"),
            points: rows.clone().map(|r| (r.iter as f64, r.v2d_norm)).collect(),
            markers: false,
        });
        series.push(Series {
            label: format!("vasset p{i}"),
            points: rows.map(|r| (r.iter as f64, r.vasset_norm)).collect(),
            markers: false,
        });
    }
    line_plot(title, "iteration", "velocity norm", &series)
}
