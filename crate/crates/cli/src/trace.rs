//! Per-step trajectory traces as comma-separated text.
//!
//! Leading `# key: value` lines carry episode metadata; then a fixed header
//! and one record per simulated instant, starting with the reset state.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use dasmr_core::environment::{Point, WorldConfig};
use dasmr_core::eval::{EpisodeResult, TracePoint};

pub const HEADER: [&str; 11] =
    ["step", "time", "x_c", "y_c", "theta_c", "v", "omega_c", "phi_l", "phi_r", "reward", "closest_distance"];

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(#[from] std::io::Error),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("trace header must be `{}`", HEADER.join(","))]
    Header,
    #[error("trace has no records")]
    Empty,
}

/// Scene facts needed to draw a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scene {
    pub goal: Point,
    pub workspace_half: f64,
    pub obstacle_center: Point,
    pub obstacle_radius: f64,
    pub d_th: f64,
}

impl Scene {
    pub fn new(world: &WorldConfig, goal: Point) -> Self {
        Self {
            goal,
            workspace_half: world.workspace_half,
            obstacle_center: world.obstacle_center,
            obstacle_radius: world.obstacle_radius,
            d_th: world.d_th,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub scene: Option<Scene>,
    pub points: Vec<TracePoint>,
}

pub fn render(result: &EpisodeResult, world: &WorldConfig) -> String {
    let s = Scene::new(world, result.goal);
    let mut out = String::new();
    let _ = writeln!(out, "# goal: {} {}", s.goal[0], s.goal[1]);
    let _ = writeln!(out, "# workspace_half: {}", s.workspace_half);
    let _ = writeln!(out, "# obstacle: {} {} {}", s.obstacle_center[0], s.obstacle_center[1], s.obstacle_radius);
    let _ = writeln!(out, "# d_th: {}", s.d_th);
    let _ = writeln!(out, "# success: {}", result.success);
    let _ = writeln!(out, "# final_error: {}", result.final_error);
    let _ = writeln!(out, "# path_length: {}", result.path_length);
    let _ = writeln!(out, "# shortest_path: {}", result.shortest_path);
    out.push_str(&HEADER.join(","));
    out.push('\n');
    for p in &result.trajectory {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.step, p.time, p.x, p.y, p.theta, p.v, p.omega, p.phi_l, p.phi_r, p.reward, p.closest_distance
        );
    }
    out
}

pub fn write(path: &Path, result: &EpisodeResult, world: &WorldConfig) -> std::io::Result<()> {
    std::fs::write(path, render(result, world))
}

fn numbers(row: usize, text: &str, n: usize) -> Result<Vec<f64>, TraceError> {
    let values = text
        .split_whitespace()
        .map(str::parse::<f64>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| TraceError::Row { row, message: e.to_string() })?;
    if values.len() != n {
        return Err(TraceError::Row { row, message: format!("expected {n} numbers, found {}", values.len()) });
    }
    Ok(values)
}

/// Parses a trace. Rows are numbered by file line, starting at 1.
pub fn parse(text: &str) -> Result<Trace, TraceError> {
    let mut goal = None;
    let mut half = None;
    let mut obstacle = None;
    let mut d_th = None;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut header_seen = false;
    for (row, line) in lines.by_ref() {
        if let Some(meta) = line.strip_prefix('#') {
            let Some((key, value)) = meta.split_once(':') else { continue };
            match key.trim() {
                "goal" => goal = Some(numbers(row, value, 2)?),
                "workspace_half" => half = Some(numbers(row, value, 1)?[0]),
                "obstacle" => obstacle = Some(numbers(row, value, 3)?),
                "d_th" => d_th = Some(numbers(row, value, 1)?[0]),
                _ => {}
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        if line.trim() != HEADER.join(",") {
            return Err(TraceError::Header);
        }
        header_seen = true;
        break;
    }
    if !header_seen {
        return Err(TraceError::Empty);
    }

    let mut body = String::new();
    let mut first = None;
    for (row, line) in lines {
        first.get_or_insert(row);
        body.push_str(line);
        body.push('\n');
    }
    // csv counts lines from 1 within the body.
    let points = parse_records(&body, first.map_or(0, |r| r - 1))?;
    let scene = match (goal, half, obstacle) {
        (Some(g), Some(h), Some(o)) => Some(Scene {
            goal: [g[0], g[1]],
            workspace_half: h,
            obstacle_center: [o[0], o[1]],
            obstacle_radius: o[2],
            d_th: d_th.unwrap_or(0.0),
        }),
        _ => None,
    };
    Ok(Trace { scene, points })
}

fn parse_records(body: &str, offset: usize) -> Result<Vec<TracePoint>, TraceError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(body.as_bytes());
    let mut points: Vec<TracePoint> = Vec::new();
    for record in reader.records() {
        let row_of = |line: Option<u64>| offset + line.unwrap_or(0) as usize;
        let record = record.map_err(|e| TraceError::Row {
            row: row_of(e.position().map(|p| p.line())),
            message: e.to_string(),
        })?;
        let row = row_of(record.position().map(|p| p.line()));
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != HEADER.len() {
            return Err(TraceError::Row { row, message: format!("expected {} fields, found {}", HEADER.len(), record.len()) });
        }
        let mut v = [0.0f64; 11];
        for (k, field) in record.iter().enumerate() {
            v[k] = field
                .trim()
                .parse()
                .map_err(|_| TraceError::Row { row, message: format!("{} is not a number: `{field}`", HEADER[k]) })?;
        }
        if v[0] < 0.0 || v[0].fract() != 0.0 {
            return Err(TraceError::Row { row, message: format!("step must be a non-negative integer, found {}", v[0]) });
        }
        let step = v[0] as usize;
        if points.last().is_some_and(|p| p.step >= step) {
            return Err(TraceError::Row { row, message: "step does not increase".into() });
        }
        points.push(TracePoint {
            step,
            time: v[1],
            x: v[2],
            y: v[3],
            theta: v[4],
            v: v[5],
            omega: v[6],
            phi_l: v[7],
            phi_r: v[8],
            reward: v[9],
            closest_distance: v[10],
        });
    }
    if points.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(points)
}

pub fn read(path: &Path) -> Result<Trace, TraceError> {
    parse(&std::fs::read_to_string(path)?)
}
