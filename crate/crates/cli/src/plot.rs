//! SVG rendering of a trajectory log. Robots are solid circles, pedestrians
//! hollow circles and robot goals red stars.

use crowdgame::crowd_sim::SimRecord;
use crowdgame::Vec2;
use std::fmt::Write;

const PX_PER_M: f64 = 50.0;
const MARGIN_M: f64 = 1.0;
const ROBOT_MARK_RADIUS: f64 = 0.3;
const SNAPSHOTS: usize = 8;
const ROBOT_COLORS: [&str; 6] = [
    "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf",
];

struct Frame {
    min: Vec2,
    max: Vec2,
}

impl Frame {
    fn x(&self, p: Vec2) -> f64 {
        (p.x - self.min.x) * PX_PER_M
    }

    fn y(&self, p: Vec2) -> f64 {
        (self.max.y - p.y) * PX_PER_M
    }
}

/// Indices of the rows drawn as markers: evenly spaced, always including
/// the first and last row.
fn snapshot_rows(n: usize) -> Vec<usize> {
    if n <= SNAPSHOTS {
        return (0..n).collect();
    }
    let mut rows: Vec<usize> = (0..SNAPSHOTS)
        .map(|k| k * (n - 1) / (SNAPSHOTS - 1))
        .collect();
    rows.dedup();
    rows
}

fn star(cx: f64, cy: f64, r: f64) -> String {
    let mut pts = Vec::with_capacity(10);
    for k in 0..10 {
        let radius = if k % 2 == 0 { r } else { r * 0.45 };
        let a = -std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI / 5.0;
        pts.push(format!(
            "{:.2},{:.2}",
            cx + radius * a.cos(),
            cy + radius * a.sin()
        ));
    }
    pts.join(" ")
}

fn polyline(frame: &Frame, pts: impl Iterator<Item = Vec2>) -> String {
    pts.map(|p| format!("{:.2},{:.2}", frame.x(p), frame.y(p)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn render_svg(rec: &SimRecord) -> Result<String, String> {
    if rec.steps.is_empty() {
        return Err("log has no steps".into());
    }
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let all = rec
        .steps
        .iter()
        .flat_map(|s| s.robots.iter().chain(&s.humans).map(|a| a.position))
        .chain(rec.header.robot_goals.iter().copied());
    for p in all {
        min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
        max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
    }
    let frame = Frame {
        min: min - Vec2::new(MARGIN_M, MARGIN_M),
        max: max + Vec2::new(MARGIN_M, MARGIN_M),
    };
    let width = (frame.max.x - frame.min.x) * PX_PER_M;
    let height = (frame.max.y - frame.min.y) * PX_PER_M;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.2} {height:.2}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let h = &rec.header;
    let last = rec.steps.last().expect("non-empty");
    let _ = writeln!(
        out,
        r#"<text x="8" y="18" font-family="sans-serif" font-size="14">{} {} seed {} t={:.1}s</text>"#,
        h.method,
        h.layout.as_str(),
        h.seed,
        last.time
    );

    let rows = snapshot_rows(rec.steps.len());
    for j in 0..h.num_humans {
        let line = polyline(&frame, rec.steps.iter().map(|s| s.humans[j].position));
        let _ = writeln!(
            out,
            r##"<polyline points="{line}" fill="none" stroke="#999999" stroke-width="1"/>"##
        );
        let r = h.human_radii.get(j).copied().unwrap_or(ROBOT_MARK_RADIUS) * PX_PER_M;
        for &k in &rows {
            let p = rec.steps[k].humans[j].position;
            let _ = writeln!(
                out,
                r##"<circle cx="{:.2}" cy="{:.2}" r="{r:.2}" fill="none" stroke="#555555" stroke-width="1.5"/>"##,
                frame.x(p),
                frame.y(p)
            );
        }
    }
    for i in 0..h.num_robots {
        let color = ROBOT_COLORS[i % ROBOT_COLORS.len()];
        let line = polyline(&frame, rec.steps.iter().map(|s| s.robots[i].position));
        let _ = writeln!(
            out,
            r#"<polyline points="{line}" fill="none" stroke="{color}" stroke-width="2"/>"#
        );
        for &k in &rows {
            let p = rec.steps[k].robots[i].position;
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{color}"/>"#,
                frame.x(p),
                frame.y(p),
                ROBOT_MARK_RADIUS * PX_PER_M
            );
        }
    }
    for g in &h.robot_goals {
        let _ = writeln!(
            out,
            r##"<polygon points="{}" fill="#d62728"/>"##,
            star(frame.x(*g), frame.y(*g), 0.3 * PX_PER_M)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_rows_cover_both_ends() {
        assert_eq!(snapshot_rows(3), vec![0, 1, 2]);
        let rows = snapshot_rows(40);
        assert_eq!(rows.first(), Some(&0));
        assert_eq!(rows.last(), Some(&39));
        assert_eq!(rows.len(), SNAPSHOTS);
    }

    #[test]
    fn star_has_ten_vertices() {
        assert_eq!(star(0.0, 0.0, 1.0).split(' ').count(), 10);
    }
}
