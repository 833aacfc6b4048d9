//! SVG drawing of a trace: workspace, obstacle, goal disc and the path of
//! the robot center as a single polyline.

use std::fmt::Write as _;

use crate::trace::Trace;

const SIZE: f64 = 800.0;
const MARGIN: f64 = 20.0;

struct Frame {
    min: [f64; 2],
    scale: f64,
}

impl Frame {
    fn fit(min: [f64; 2], max: [f64; 2]) -> Self {
        let span = (max[0] - min[0]).max(max[1] - min[1]).max(1e-6);
        Self { min, scale: (SIZE - 2.0 * MARGIN) / span }
    }

    fn x(&self, x: f64) -> f64 {
        MARGIN + (x - self.min[0]) * self.scale
    }

    // SVG y grows downward.
    fn y(&self, y: f64) -> f64 {
        SIZE - MARGIN - (y - self.min[1]) * self.scale
    }
}

/// Renders `trace`; identical traces give identical bytes.
pub fn svg(trace: &Trace) -> String {
    let frame = match &trace.scene {
        Some(s) => Frame::fit([-s.workspace_half; 2], [s.workspace_half; 2]),
        None => {
            let mut min = [f64::INFINITY; 2];
            let mut max = [f64::NEG_INFINITY; 2];
            for p in &trace.points {
                min = [min[0].min(p.x), min[1].min(p.y)];
                max = [max[0].max(p.x), max[1].max(p.y)];
            }
            let pad = 0.05 * (max[0] - min[0]).max(max[1] - min[1]).max(0.1);
            Frame::fit([min[0] - pad, min[1] - pad], [max[0] + pad, max[1] + pad])
        }
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    if let Some(s) = &trace.scene {
        let side = 2.0 * s.workspace_half * frame.scale;
        let _ = writeln!(
            out,
            r#"<rect x="{:.3}" y="{:.3}" width="{side:.3}" height="{side:.3}" fill="none" stroke="black"/>"#,
            frame.x(-s.workspace_half),
            frame.y(s.workspace_half)
        );
        let _ = writeln!(
            out,
            r#"<circle cx="{:.3}" cy="{:.3}" r="{:.3}" fill="steelblue"/>"#,
            frame.x(s.obstacle_center[0]),
            frame.y(s.obstacle_center[1]),
            s.obstacle_radius * frame.scale
        );
        let _ = writeln!(
            out,
            r#"<circle cx="{:.3}" cy="{:.3}" r="{:.3}" fill="none" stroke="green"/>"#,
            frame.x(s.goal[0]),
            frame.y(s.goal[1]),
            s.d_th.max(0.02) * frame.scale
        );
    }
    out.push_str(r#"<polyline fill="none" stroke="crimson" stroke-width="2" points=""#);
    for (i, p) in trace.points.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{:.3},{:.3}", frame.x(p.x), frame.y(p.y));
    }
    out.push_str("\"/>\n");
    if let Some(start) = trace.points.first() {
        let _ = writeln!(out, r#"<circle cx="{:.3}" cy="{:.3}" r="4" fill="black"/>"#, frame.x(start.x), frame.y(start.y));
    }
    out.push_str("</svg>\n");
    out
}
