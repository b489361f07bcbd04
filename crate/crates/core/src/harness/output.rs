use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::HarnessConfig;
use super::sim::{RunRecord, TraceSample};
use super::sweep::RunSummary;
use super::HarnessError;
use crate::geometry::{Segment, Vec2};
use crate::path::PathSpec;

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

/// One JSON object per line.
pub fn trace_jsonl(trace: &[TraceSample]) -> String {
    let mut out = String::with_capacity(trace.len() * 320);
    for sample in trace {
        out.push_str(&serde_json::to_string(sample).expect("trace samples serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_trace_line(line: &str) -> Result<TraceSample, serde_json::Error> {
    serde_json::from_str(line)
}

pub fn write_trace(path: &Path, trace: &[TraceSample]) -> Result<(), HarnessError> {
    fs::write(path, trace_jsonl(trace)).map_err(io_error(path))
}

pub(crate) fn trace_file_name(summary_index: usize, strategy: &str) -> String {
    format!("trace_{summary_index:04}_{strategy}.jsonl")
}

#[derive(Serialize)]
struct CsvRow<'a> {
    index: usize,
    slider: &'a str,
    path: &'a str,
    walls: bool,
    strategy: &'a str,
    mode: &'a str,
    admittance: bool,
    lateral_offset: f64,
    contact_offset: f64,
    orientation: f64,
    contact_friction: f64,
    pressure: &'a str,
    duration: f64,
    seed: u64,
    normalized_distance: f64,
    max_deviation: f64,
    max_contact_deviation: f64,
    final_lateral_offset: f64,
    first_minute_mean_offset: f64,
    final_minute_mean_offset: f64,
    contact_loss_count: u32,
    completed: bool,
    first_contact_time: Option<f64>,
    final_time: f64,
    progress: f64,
    ideal_distance: f64,
    peak_force: f64,
    contact_lost_at: Option<f64>,
    abort: &'a str,
}

const CSV_HEADER: &str = "index,slider,path,walls,strategy,mode,admittance,lateral_offset,contact_offset,orientation,\
contact_friction,pressure,duration,seed,normalized_distance,max_deviation,max_contact_deviation,final_lateral_offset,\
first_minute_mean_offset,final_minute_mean_offset,contact_loss_count,completed,first_contact_time,final_time,progress,\
ideal_distance,peak_force,contact_lost_at,abort";

/// Metrics table, one row per run in the given order.
pub fn metrics_csv(runs: &[RunSummary]) -> String {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in runs {
        let s = &r.scenario;
        let m = &r.metrics;
        writer
            .serialize(CsvRow {
                index: s.index,
                slider: s.slider.name(),
                path: &s.path,
                walls: s.walls,
                strategy: r.options.strategy.name(),
                mode: match r.options.mode {
                    super::RunMode::KinematicPusher => "kinematic_pusher",
                    super::RunMode::MobileBase => "mobile_base",
                },
                admittance: r.options.admittance,
                lateral_offset: s.lateral_offset,
                contact_offset: s.contact_offset,
                orientation: s.orientation,
                contact_friction: s.contact_friction,
                pressure: s.pressure.name(),
                duration: s.duration,
                seed: s.seed,
                normalized_distance: m.normalized_distance,
                max_deviation: m.max_deviation,
                max_contact_deviation: m.max_contact_deviation,
                final_lateral_offset: m.final_lateral_offset,
                first_minute_mean_offset: m.first_minute_mean_offset,
                final_minute_mean_offset: m.final_minute_mean_offset,
                contact_loss_count: m.contact_loss_count,
                completed: m.completed,
                first_contact_time: m.first_contact_time,
                final_time: m.final_time,
                progress: m.progress,
                ideal_distance: m.ideal_distance,
                peak_force: m.peak_force,
                contact_lost_at: m.contact_lost_at,
                abort: r.abort.as_deref().unwrap_or(""),
            })
            .expect("in-memory CSV write");
    }
    let body = String::from_utf8(writer.into_inner().expect("in-memory CSV flush")).expect("CSV is UTF-8");
    format!("{CSV_HEADER}\n{body}")
}

/// A slider trajectory to overlay on a plot.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotTrack {
    pub points: Vec<Vec2>,
    /// Point of largest deviation from the path.
    pub worst: (Vec2, f64),
    pub max_arc_length: f64,
}

struct Frame {
    min: Vec2,
    max: Vec2,
    scale: f64,
}

impl Frame {
    const MARGIN: f64 = 20.0;

    fn map(&self, p: Vec2) -> (f64, f64) {
        (
            Self::MARGIN + (p.x - self.min.x) * self.scale,
            Self::MARGIN + (self.max.y - p.y) * self.scale,
        )
    }
}

fn polyline(out: &mut String, frame: &Frame, points: &[Vec2], style: &str) {
    out.push_str("<polyline fill=\"none\" ");
    out.push_str(style);
    out.push_str(" points=\"");
    for (i, p) in points.iter().enumerate() {
        let (x, y) = frame.map(*p);
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.2},{y:.2}");
    }
    out.push_str("\"/>\n");
}

fn star(out: &mut String, frame: &Frame, at: Vec2, radius: f64) {
    let (cx, cy) = frame.map(at);
    out.push_str("<polygon fill=\"#d62728\" stroke=\"black\" stroke-width=\"0.5\" points=\"");
    for k in 0..10 {
        let r = if k % 2 == 0 { radius } else { radius * 0.45 };
        let a = std::f64::consts::PI * (k as f64 / 5.0 - 0.5);
        if k > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{:.2},{:.2}", cx + r * a.cos(), cy + r * a.sin());
    }
    out.push_str("\"/>\n");
}

/// Trajectory overlay: desired path in black, walls in grey, one line per
/// run, and a star at the worst deviation over all runs.
pub fn render_svg(title: &str, path: &PathSpec, walls: &[Segment], tracks: &[PlotTrack]) -> String {
    let end = tracks
        .iter()
        .map(|t| t.max_arc_length)
        .fold(path.length().min(1.0), f64::max)
        .min(path.length())
        + 0.5;
    let path_points: Vec<Vec2> = (0..=((end / 0.05).ceil() as usize))
        .map(|k| path.point_at(k as f64 * 0.05))
        .collect();
    let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
    let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut grow = |p: Vec2| {
        min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
        max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
    };
    path_points.iter().copied().for_each(&mut grow);
    tracks.iter().flat_map(|t| t.points.iter().copied()).for_each(&mut grow);
    min -= Vec2::new(1.0, 1.0);
    max += Vec2::new(1.0, 1.0);
    let span = (max.x - min.x).max(max.y - min.y);
    let frame = Frame {
        min,
        max,
        scale: 760.0 / span,
    };
    let width = 2.0 * Frame::MARGIN + (max.x - min.x) * frame.scale;
    let height = 2.0 * Frame::MARGIN + (max.y - min.y) * frame.scale + 20.0;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    let _ = writeln!(
        out,
        "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
        Frame::MARGIN,
        height - 6.0,
        escape(title)
    );
    for wall in walls {
        let a = frame.map(wall.start);
        let b = frame.map(wall.end);
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#7f7f7f\" stroke-width=\"4\"/>",
            a.0, a.1, b.0, b.1
        );
    }
    polyline(
        &mut out,
        &frame,
        &path_points,
        "stroke=\"black\" stroke-width=\"2\" stroke-dasharray=\"6 4\"",
    );
    for t in tracks {
        polyline(
            &mut out,
            &frame,
            &t.points,
            "stroke=\"#1f77b4\" stroke-width=\"0.8\" stroke-opacity=\"0.5\"",
        );
    }
    if let Some(worst) = tracks
        .iter()
        .map(|t| t.worst)
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
    {
        star(&mut out, &frame, worst.0, 9.0);
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub(crate) fn plot_file_name(slider: &str, path: &str, walls: bool) -> String {
    if walls {
        format!("trajectories_{slider}_{path}_walls.svg")
    } else {
        format!("trajectories_{slider}_{path}.svg")
    }
}

/// Writes the CSV and one plot per (slider, path) group for `runs`.
pub(crate) fn write_tables_and_plots(
    runs: &[RunSummary],
    config: &HarnessConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    let mut written = Vec::new();
    let csv_path = out_dir.join("metrics.csv");
    fs::write(&csv_path, metrics_csv(runs)).map_err(io_error(&csv_path))?;
    written.push(csv_path);

    let mut groups: Vec<(String, String, bool)> = Vec::new();
    for r in runs {
        let key = (
            r.scenario.slider.name().to_owned(),
            r.scenario.path.clone(),
            r.scenario.walls,
        );
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (slider, path_name, walls) in groups {
        let path_cfg = config.path(&path_name)?;
        let path = path_cfg.path().map_err(|e| HarnessError::Config(e.to_string()))?;
        let wall_segments = if walls {
            path_cfg
                .wall_segments()
                .map_err(|e| HarnessError::Config(e.to_string()))?
        } else {
            Vec::new()
        };
        let tracks: Vec<PlotTrack> = runs
            .iter()
            .filter(|r| r.scenario.slider.name() == slider && r.scenario.path == path_name && r.scenario.walls == walls)
            .map(|r| r.track.clone())
            .collect();
        let title = format!(
            "{slider} slider, {path_name} path{}",
            if walls { " with walls" } else { "" }
        );
        let svg = render_svg(&title, &path, &wall_segments, &tracks);
        let file = out_dir.join(plot_file_name(&slider, &path_name, walls));
        fs::write(&file, svg).map_err(io_error(&file))?;
        written.push(file);
    }
    Ok(written)
}

/// Writes per-run traces, the metrics CSV and trajectory plots.
pub fn emit_outputs(
    records: &[RunRecord],
    config: &HarnessConfig,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;
    let mut written = Vec::new();
    for r in records {
        let file = out_dir.join(trace_file_name(r.scenario.index, r.options.strategy.name()));
        write_trace(&file, &r.trace)?;
        written.push(file);
    }
    let summaries: Vec<RunSummary> = records
        .iter()
        .map(|r| RunSummary::from_record(r, config.run.plot_stride))
        .collect();
    written.extend(write_tables_and_plots(&summaries, config, out_dir)?);
    Ok(written)
}
