//! File output for sweeps and snapshots: CSV rows, JSON documents and
//! self-contained SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{KAggregate, RankHistogram, Snapshot, SweepResult, SweepRow};
use crate::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(Error::InvalidSpec(format!("unknown format {other:?} (csv, json, svg)"))),
        }
    }
}

/// Header plus one record per row; an empty slice yields the header only.
pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(SweepRow::COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?;
    if header.iter().ne(SweepRow::COLUMNS) {
        return Err(Error::InvalidSpec(format!("unexpected CSV header: {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn csv_string(rows: &[SweepRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// JSON document of `value`, with `config` added at the top level if given.
pub fn json_with_config<T: Serialize>(value: &T, config: Option<&serde_json::Value>) -> Result<String> {
    let mut doc = serde_json::to_value(value)?;
    if let (Some(config), serde_json::Value::Object(map)) = (config, &mut doc) {
        map.insert("config".into(), config.clone());
    }
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

struct Frame {
    x_max: f64,
    y_max: f64,
    svg: String,
}

impl Frame {
    fn new(title: &str, x_label: &str, y_label: &str, x_max: f64, y_max: f64) -> Self {
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        let (x0, y0, x1, y1) = (LEFT, HEIGHT - BOTTOM, WIDTH - RIGHT, TOP);
        let _ = writeln!(
            svg,
            r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
        let frame = Frame {
            x_max: x_max.max(1.0),
            y_max: y_max.max(1e-9),
            svg,
        };
        let mut frame = frame;
        for i in 0..=4 {
            let v = frame.y_max * i as f64 / 4.0;
            let y = frame.y(v);
            let _ = writeln!(
                frame.svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                y + 4.0,
                tick(v)
            );
        }
        frame
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + v / self.x_max * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - v / self.y_max * (HEIGHT - TOP - BOTTOM)
    }

    fn x_tick(&mut self, v: f64, label: &str) {
        let x = self.x(v);
        let _ = writeln!(
            self.svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            HEIGHT - BOTTOM + 16.0,
            escape(label)
        );
    }

    fn finish(mut self) -> String {
        self.svg.push_str("</svg>\n");
        self.svg
    }
}

fn tick(v: f64) -> String {
    if v >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn by_k(result: &SweepResult) -> Vec<&KAggregate> {
    let mut aggs: Vec<&KAggregate> = result.aggregates.iter().collect();
    aggs.sort_by_key(|a| a.k);
    aggs
}

fn subtitle(result: &SweepResult) -> String {
    let spec = &result.spec;
    format!(
        "{} market, n = {}, {} seeds, {}",
        spec.market.name(),
        spec.market.n(),
        spec.seeds,
        spec.next_policy
    )
}

/// Mean doctor rank against loyalty, one point per loyalty level.
pub fn rank_plot_svg(result: &SweepResult) -> String {
    let aggs = by_k(result);
    let x_max = aggs.last().map_or(1.0, |a| a.k as f64);
    let y_max = aggs
        .iter()
        .map(|a| a.avg_doctor_rank.mean)
        .fold(0.0, f64::max)
        * 1.1;
    let mut f = Frame::new(
        &format!("Average doctor rank ({})", subtitle(result)),
        "loyalty k",
        "average doctor rank",
        x_max,
        y_max,
    );
    let points: Vec<String> = aggs
        .iter()
        .map(|a| format!("{:.1},{:.1}", f.x(a.k as f64), f.y(a.avg_doctor_rank.mean)))
        .collect();
    if !points.is_empty() {
        let _ = writeln!(
            f.svg,
            r##"<polyline class="rank" points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            points.join(" ")
        );
    }
    for a in &aggs {
        let (x, y) = (f.x(a.k as f64), f.y(a.avg_doctor_rank.mean));
        let _ = writeln!(
            f.svg,
            r##"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="#1f77b4"><title>k={} rank={:.3}</title></circle>"##,
            a.k, a.avg_doctor_rank.mean
        );
    }
    for a in [aggs.first(), aggs.last()].into_iter().flatten() {
        f.x_tick(a.k as f64, &a.k.to_string());
    }
    f.finish()
}

/// Stacked bars per loyalty level: balanced-phase proposals at the bottom,
/// unbalanced-phase proposals on top.
pub fn phase_bars_svg(result: &SweepResult) -> String {
    let aggs = by_k(result);
    let y_max = aggs
        .iter()
        .map(|a| a.proposals_balanced.mean + a.proposals_unbalanced.mean)
        .fold(0.0, f64::max)
        * 1.1;
    let slots = aggs.len().max(1) as f64;
    let mut f = Frame::new(
        &format!("Proposals by phase ({})", subtitle(result)),
        "loyalty k",
        "mean proposals",
        slots,
        y_max,
    );
    let bar = (f.x(1.0) - f.x(0.0)) * 0.7;
    for (i, a) in aggs.iter().enumerate() {
        let centre = f.x(i as f64 + 0.5);
        let base = f.y(0.0);
        let top_balanced = f.y(a.proposals_balanced.mean);
        let top_all = f.y(a.proposals_balanced.mean + a.proposals_unbalanced.mean);
        let _ = writeln!(
            f.svg,
            r##"<rect class="balanced" x="{:.1}" y="{top_balanced:.1}" width="{bar:.1}" height="{:.1}" fill="#1f77b4"><title>k={} balanced={:.1}</title></rect>"##,
            centre - bar / 2.0,
            base - top_balanced,
            a.k,
            a.proposals_balanced.mean
        );
        let _ = writeln!(
            f.svg,
            r##"<rect class="unbalanced" x="{:.1}" y="{top_all:.1}" width="{bar:.1}" height="{:.1}" fill="#ff7f0e"><title>k={} unbalanced={:.1}</title></rect>"##,
            centre - bar / 2.0,
            top_balanced - top_all,
            a.k,
            a.proposals_unbalanced.mean
        );
        f.x_tick(i as f64 + 0.5, &a.k.to_string());
    }
    let legend_x = WIDTH - RIGHT - 150.0;
    for (j, (name, colour)) in [("balanced phase", "#1f77b4"), ("unbalanced phase", "#ff7f0e")]
        .iter()
        .enumerate()
    {
        let y = TOP + 16.0 * j as f64;
        let _ = writeln!(
            f.svg,
            r#"<rect x="{legend_x:.1}" y="{y:.1}" width="10" height="10" fill="{colour}"/><text x="{:.1}" y="{:.1}">{name}</text>"#,
            legend_x + 14.0,
            y + 9.0
        );
    }
    f.finish()
}

fn heat_row(f: &mut Frame, hist: &RankHistogram, row: f64, peak: u32) {
    for (i, &count) in hist.counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let lo = (i as u32 * hist.bin_width) as f64;
        let hi = (((i as u32 + 1) * hist.bin_width).min(hist.max_rank)) as f64;
        let shade = count as f64 / peak.max(1) as f64;
        let (x0, x1) = (f.x(lo), f.x(hi));
        let (y0, y1) = (f.y(row + 1.0), f.y(row));
        let _ = writeln!(
            f.svg,
            r#"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="rgb({},{},{})"><title>ranks {}-{}: {count}</title></rect>"#,
            x1 - x0,
            y1 - y0,
            (247.0 - 239.0 * shade).round(),
            (251.0 - 203.0 * shade).round(),
            (255.0 - 148.0 * shade).round(),
            lo + 1.0,
            hi
        );
    }
}

/// Two heat strips of hospital ranks: end of the balanced phase (bottom)
/// and termination (top). Darker cells hold more hospitals.
pub fn heatmap_svg(snapshot: &Snapshot) -> String {
    let max_rank = snapshot.balanced_end.max_rank.max(snapshot.termination.max_rank) as f64;
    let mut f = Frame::new(
        &format!(
            "Hospital ranks, n = {}, k = {}, seed = {}",
            snapshot.n, snapshot.k, snapshot.seed
        ),
        "rank of assigned doctor",
        "",
        max_rank,
        2.0,
    );
    // the frame's numeric y ticks are meaningless here; cover them
    let _ = writeln!(
        f.svg,
        r#"<rect x="0" y="{TOP:.1}" width="{:.1}" height="{:.1}" fill="white"/>"#,
        LEFT - 1.0,
        HEIGHT - TOP - BOTTOM + 10.0
    );
    let peak = snapshot
        .balanced_end
        .counts
        .iter()
        .chain(&snapshot.termination.counts)
        .copied()
        .max()
        .unwrap_or(0);
    heat_row(&mut f, &snapshot.balanced_end, 0.0, peak);
    heat_row(&mut f, &snapshot.termination, 1.0, peak);
    for (row, label) in [(0.5, "balanced end"), (1.5, "termination")] {
        let _ = writeln!(
            f.svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{label}</text>"#,
            LEFT - 6.0,
            f.y(row) + 4.0
        );
    }
    for v in [1.0, max_rank / 2.0, max_rank] {
        f.x_tick(v, &format!("{v:.0}"));
    }
    f.finish()
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `result` in each format under `dir`, returning the paths written.
/// SVG output is a rank plot and a phase-split bar chart.
pub fn emit(
    result: &SweepResult,
    formats: &[Format],
    dir: &Path,
    stem: &str,
    config: Option<&serde_json::Value>,
) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = Vec::new();
    for format in formats {
        match format {
            Format::Csv => {
                let path = dir.join(format!("{stem}.csv"));
                write_file(&path, csv_string(&result.rows)?.as_bytes())?;
                written.push(path);
            }
            Format::Json => {
                let path = dir.join(format!("{stem}.json"));
                write_file(&path, json_with_config(result, config)?.as_bytes())?;
                written.push(path);
            }
            Format::Svg => {
                for (suffix, svg) in [("rank", rank_plot_svg(result)), ("phases", phase_bars_svg(result))] {
                    let path = dir.join(format!("{stem}_{suffix}.svg"));
                    write_file(&path, svg.as_bytes())?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

/// Writes a snapshot: its single row as CSV, the full record as JSON and
/// the rank heat map as SVG.
pub fn emit_snapshot(
    snapshot: &Snapshot,
    formats: &[Format],
    dir: &Path,
    stem: &str,
    config: Option<&serde_json::Value>,
) -> Result<Vec<PathBuf>> {
    prepare(dir)?;
    let mut written = Vec::new();
    for format in formats {
        let (path, bytes) = match format {
            Format::Csv => (
                dir.join(format!("{stem}.csv")),
                csv_string(std::slice::from_ref(&snapshot.row))?,
            ),
            Format::Json => (dir.join(format!("{stem}.json")), json_with_config(snapshot, config)?),
            Format::Svg => (dir.join(format!("{stem}_heatmap.svg")), heatmap_svg(snapshot)),
        };
        write_file(&path, bytes.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
