//! Sparsity Roofline series (accuracy vs. speedup at SoL) and their CSV, JSON and
//! SVG renderings, plus the classic log-log Roofline chart.
//!
//! All floating-point output is printed with 6 significant digits so that files are
//! stable under diff.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hwmodel::{EngineClass, HardwareProfile};
use crate::roofline::SpeedupRecord;
use crate::sparsecost::{SparsityConfig, SparsityPattern};

/// Formats `x` with 6 significant digits, like C's `%g`.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `x` rounded to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    fmt_sig6(x).parse().unwrap_or(x)
}

/// Externally measured top-1 accuracy of one pruned model.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRecord {
    pub model: String,
    pub config: SparsityConfig,
    pub top1: f64,
}

#[derive(Deserialize)]
struct AccuracyRow {
    model: String,
    pattern: String,
    level: f64,
    top1: f64,
}

/// Reads an accuracy CSV with header `model,pattern,level,top1`.
pub fn load_accuracy(path: impl AsRef<Path>) -> Result<Vec<AccuracyRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_accuracy(file, &path.display().to_string())
}

pub fn parse_accuracy(reader: impl Read, context: &str) -> Result<Vec<AccuracyRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (i, row) in rdr.deserialize::<AccuracyRow>().enumerate() {
        let line = i + 2;
        let at = |message: String| Error::ParseLine {
            context: context.to_string(),
            line,
            message,
        };
        let row = row.map_err(|e| at(e.to_string()))?;
        let pattern: SparsityPattern = row.pattern.parse().map_err(|e: Error| at(e.to_string()))?;
        let config = SparsityConfig::new(pattern, row.level).map_err(|e| at(e.to_string()))?;
        if !(0.0..=1.0).contains(&row.top1) {
            return Err(at(format!("top1 must be in [0, 1], got {}", row.top1)));
        }
        if !seen.insert((row.model.clone(), pattern, config.level_key())) {
            return Err(Error::Duplicate {
                what: "accuracy record",
                key: format!("{},{},{}", row.model, pattern, row.level),
            });
        }
        records.push(AccuracyRecord {
            model: row.model,
            config,
            top1: row.top1,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub level: f64,
    pub speedup: f64,
    pub top1: f64,
}

impl SeriesPoint {
    pub fn label(&self, pattern: &SparsityPattern) -> String {
        format!("{pattern}@{}", fmt_sig6(self.level))
    }
}

/// One line on a Sparsity Roofline plot: a model pruned with one pattern at several
/// levels, ordered by level.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub model: String,
    pub pattern: SparsityPattern,
    pub points: Vec<SeriesPoint>,
}

impl Series {
    pub fn name(&self) -> String {
        format!("{} {}", self.model, self.pattern)
    }
}

/// Joined series and the speedup records that found no accuracy.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSet {
    pub series: Vec<Series>,
    pub unjoined: Vec<SpeedupRecord>,
}

/// Joins speedups with accuracies on `(model, pattern, level)`.
///
/// Accuracies are never interpolated: a speedup without an exact accuracy match is
/// returned in `unjoined`. Series are ordered by model then pattern.
pub fn assemble_series(
    speedups: &[SpeedupRecord],
    accuracy: &[AccuracyRecord],
) -> Result<SeriesSet> {
    let acc: BTreeMap<(&str, SparsityPattern, i64), f64> = accuracy
        .iter()
        .map(|a| ((a.model.as_str(), a.config.pattern(), a.config.level_key()), a.top1))
        .collect();
    let mut grouped: BTreeMap<(String, SparsityPattern), Vec<SeriesPoint>> = BTreeMap::new();
    let mut unjoined = Vec::new();
    let mut seen = HashSet::new();
    for rec in speedups {
        let key = (rec.model.as_str(), rec.config.pattern(), rec.config.level_key());
        if !seen.insert(key) {
            return Err(Error::Duplicate {
                what: "speedup record",
                key: format!("{},{}", rec.model, rec.config),
            });
        }
        match acc.get(&key) {
            Some(&top1) => grouped
                .entry((rec.model.clone(), rec.config.pattern()))
                .or_default()
                .push(SeriesPoint {
                    level: rec.config.level(),
                    speedup: rec.speedup,
                    top1,
                }),
            None => unjoined.push(rec.clone()),
        }
    }
    if grouped.is_empty() {
        return Err(Error::EmptyJoin);
    }
    let series = grouped
        .into_iter()
        .map(|((model, pattern), mut points)| {
            points.sort_by(|a, b| a.level.total_cmp(&b.level));
            Series {
                model,
                pattern,
                points,
            }
        })
        .collect();
    Ok(SeriesSet { series, unjoined })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Svg => "svg",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "svg" => Ok(OutputFormat::Svg),
            other => Err(Error::InvalidArgument(format!("unknown output format `{other}`"))),
        }
    }
}

/// Writes series as `model,pattern,level,speedup,top1` rows.
pub fn write_series_csv(series: &[Series], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "model,pattern,level,speedup,top1")?;
    for s in series {
        for p in &s.points {
            writeln!(
                out,
                "{},{},{},{},{}",
                s.model,
                s.pattern,
                fmt_sig6(p.level),
                fmt_sig6(p.speedup),
                fmt_sig6(p.top1)
            )?;
        }
    }
    Ok(())
}

/// Inverse of [`write_series_csv`]; rows are regrouped in file order.
pub fn parse_series_csv(reader: impl Read) -> Result<Vec<Series>> {
    #[derive(Deserialize)]
    struct Row {
        model: String,
        pattern: String,
        level: f64,
        speedup: f64,
        top1: f64,
    }
    let mut rdr = csv::Reader::from_reader(reader);
    let mut series: Vec<Series> = Vec::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| Error::Parse {
            context: "series csv".into(),
            message: e.to_string(),
        })?;
        let pattern: SparsityPattern = row.pattern.parse()?;
        let point = SeriesPoint {
            level: row.level,
            speedup: row.speedup,
            top1: row.top1,
        };
        match series.last_mut() {
            Some(s) if s.model == row.model && s.pattern == pattern => s.points.push(point),
            _ => series.push(Series {
                model: row.model,
                pattern,
                points: vec![point],
            }),
        }
    }
    Ok(series)
}

#[derive(Serialize)]
struct JsonSeries<'a> {
    model: &'a str,
    pattern: String,
    points: Vec<SeriesPoint>,
}

/// Writes `[{model, pattern, points: [{level, speedup, top1}]}]`.
pub fn write_series_json(series: &[Series], mut out: impl Write) -> std::io::Result<()> {
    let doc: Vec<JsonSeries> = series
        .iter()
        .map(|s| JsonSeries {
            model: &s.model,
            pattern: s.pattern.to_string(),
            points: s
                .points
                .iter()
                .map(|p| SeriesPoint {
                    level: round_sig6(p.level),
                    speedup: round_sig6(p.speedup),
                    top1: round_sig6(p.top1),
                })
                .collect(),
        })
        .collect();
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgOptions {
    pub width: u32,
    pub height: u32,
}

impl Default for SvgOptions {
    fn default() -> Self {
        Self {
            width: 640,
            height: 480,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;

/// Maps data coordinates into the plot area.
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    width: f64,
    height: f64,
}

impl Frame {
    fn new(opts: &SvgOptions, x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            x0: x.0,
            x1: x.1,
            y0: y.0,
            y1: y.1,
            width: f64::from(opts.width),
            height: f64::from(opts.height),
        }
    }

    fn px(&self, x: f64) -> f64 {
        let w = self.width - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + (x - self.x0) / (self.x1 - self.x0) * w
    }

    fn py(&self, y: f64) -> f64 {
        let h = self.height - MARGIN_TOP - MARGIN_BOTTOM;
        self.height - MARGIN_BOTTOM - (y - self.y0) / (self.y1 - self.y0) * h
    }

    fn bottom(&self) -> f64 {
        self.height - MARGIN_BOTTOM
    }

    fn right(&self) -> f64 {
        self.width - MARGIN_RIGHT
    }
}

fn svg_open(svg: &mut String, opts: &SvgOptions) {
    let (w, h) = (opts.width, opts.height);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
}

fn svg_axes(svg: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, b, r) = (MARGIN_LEFT, f.bottom(), f.right());
    let _ = writeln!(
        svg,
        r#"<path class="axes" d="M{l:.2},{MARGIN_TOP:.2} L{l:.2},{b:.2} L{r:.2},{b:.2}" fill="none" stroke="black"/>"#
    );
    let cx = (l + r) / 2.0;
    let _ = writeln!(
        svg,
        r#"<text class="x-label" x="{cx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        f.height - 15.0,
        escape(x_label)
    );
    let cy = (MARGIN_TOP + b) / 2.0;
    let _ = writeln!(
        svg,
        r#"<text class="y-label" x="18" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 18 {cy:.2})">{}</text>"#,
        escape(y_label)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn linear_ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..=count)
        .map(|i| lo + (hi - lo) * i as f64 / count as f64)
        .collect()
}

/// Accuracy (y) against speedup at SoL (x), one polyline per series, with a dashed
/// reference line at the dense baseline (speedup 1).
pub fn render_series_svg(series: &[Series], opts: &SvgOptions) -> Result<String> {
    let points = || series.iter().flat_map(|s| s.points.iter());
    if points().next().is_none() {
        return Err(Error::InvalidArgument("cannot render an empty series set".into()));
    }
    let x_max = points().map(|p| p.speedup).fold(1.0, f64::max);
    let x_min = points().map(|p| p.speedup).fold(1.0, f64::min);
    let span = (x_max - x_min).max(0.1);
    let x = (x_min, x_max + 0.05 * span);
    let y_lo = points().map(|p| p.top1).fold(f64::INFINITY, f64::min);
    let y_hi = points().map(|p| p.top1).fold(f64::NEG_INFINITY, f64::max);
    let pad = ((y_hi - y_lo) * 0.1).max(0.01);
    let y = ((y_lo - pad).max(0.0), (y_hi + pad).min(1.0));
    let f = Frame::new(opts, x, y);

    let mut svg = String::new();
    svg_open(&mut svg, opts);
    svg_axes(&mut svg, &f, "Speedup over dense at speed-of-light", "Top-1 accuracy");
    for t in linear_ticks(x.0, x.1, 5) {
        let _ = writeln!(
            svg,
            r#"<text class="x-tick" x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.px(t),
            f.bottom() + 15.0,
            fmt_tick(t)
        );
    }
    for t in linear_ticks(y.0, y.1, 5) {
        let _ = writeln!(
            svg,
            r#"<text class="y-tick" x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_LEFT - 5.0,
            f.py(t) + 4.0,
            fmt_tick(t)
        );
    }
    let dx = f.px(1.0);
    let _ = writeln!(
        svg,
        r#"<line class="dense-ref" x1="{dx:.2}" y1="{MARGIN_TOP:.2}" x2="{dx:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 3"/>"#,
        f.bottom()
    );
    let _ = writeln!(
        svg,
        r#"<text class="dense-label" x="{:.2}" y="{:.2}">dense</text>"#,
        dx + 3.0,
        MARGIN_TOP + 10.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", f.px(p.speedup), f.py(p.top1)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline class="series" data-series="{}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            escape(&s.name()),
            coords.join(" ")
        );
        for p in &s.points {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"><title>{}</title></circle>"#,
                f.px(p.speedup),
                f.py(p.top1),
                escape(&p.label(&s.pattern))
            );
        }
        let ly = MARGIN_TOP + 14.0 * i as f64;
        let lx = f.right() + 10.0;
        let _ = writeln!(
            svg,
            r#"<text class="legend" x="{lx:.2}" y="{:.2}" fill="{color}">{}</text>"#,
            ly + 4.0,
            escape(&s.name())
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn fmt_tick(v: f64) -> String {
    fmt_sig6((v * 1000.0).round() / 1000.0)
}

/// A measured or modeled kernel on the classic Roofline.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub label: String,
    pub ai: f64,
    pub flops_per_s: f64,
}

/// Log-log throughput vs. arithmetic intensity chart with one roof per engine.
#[derive(Debug, Clone)]
pub struct RooflineChart<'a> {
    pub profile: &'a HardwareProfile,
    pub engines: Vec<EngineClass>,
    pub points: Vec<LabeledPoint>,
}

impl RooflineChart<'_> {
    /// Intensity range spanned by the chart, in whole decades.
    pub fn ai_range(&self) -> Result<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &e in &self.engines {
            let knee = self.profile.knee_ai(e)?;
            lo = lo.min(knee / 100.0);
            hi = hi.max(knee * 10.0);
        }
        for p in self.points.iter().filter(|p| p.ai > 0.0) {
            lo = lo.min(p.ai);
            hi = hi.max(p.ai);
        }
        if !lo.is_finite() {
            return Err(Error::InvalidArgument("roofline chart needs an engine".into()));
        }
        Ok((10f64.powf(lo.log10().floor()), 10f64.powf(hi.log10().ceil())))
    }

    /// Vertices (ai, FLOP/s) of the roof for `engine`; the middle one is the knee.
    pub fn roof_vertices(&self, engine: EngineClass) -> Result<[(f64, f64); 3]> {
        let (lo, hi) = self.ai_range()?;
        let knee = self.profile.knee_ai(engine)?;
        let peak = self.profile.peak_flops(engine)?;
        Ok([
            (lo, self.profile.roof_throughput(engine, lo)?),
            (knee, peak),
            (hi, self.profile.roof_throughput(engine, hi)?),
        ])
    }

    pub fn render_svg(&self, opts: &SvgOptions) -> Result<String> {
        let (ai_lo, ai_hi) = self.ai_range()?;
        let mut y_lo = f64::INFINITY;
        let mut y_hi = f64::NEG_INFINITY;
        for &e in &self.engines {
            for (_, y) in self.roof_vertices(e)? {
                y_lo = y_lo.min(y);
                y_hi = y_hi.max(y);
            }
        }
        for p in self.points.iter().filter(|p| p.flops_per_s > 0.0) {
            y_lo = y_lo.min(p.flops_per_s);
            y_hi = y_hi.max(p.flops_per_s);
        }
        let y = (y_lo.log10().floor(), y_hi.log10().ceil());
        let f = Frame::new(opts, (ai_lo.log10(), ai_hi.log10()), y);

        let mut svg = String::new();
        svg_open(&mut svg, opts);
        svg_axes(&mut svg, &f, "Arithmetic intensity (FLOP/byte)", "Throughput (FLOP/s)");
        for d in (f.x0 as i32)..=(f.x1 as i32) {
            let _ = writeln!(
                svg,
                r#"<text class="x-tick" x="{:.2}" y="{:.2}" text-anchor="middle">1e{d}</text>"#,
                f.px(f64::from(d)),
                f.bottom() + 15.0
            );
        }
        for d in (f.y0 as i32)..=(f.y1 as i32) {
            let _ = writeln!(
                svg,
                r#"<text class="y-tick" x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#,
                MARGIN_LEFT - 5.0,
                f.py(f64::from(d)) + 4.0
            );
        }
        for (i, &e) in self.engines.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let coords: Vec<String> = self
                .roof_vertices(e)?
                .iter()
                .map(|&(a, t)| format!("{:.2},{:.2}", f.px(a.log10()), f.py(t.log10())))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline class="roof" data-engine="{e}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                coords.join(" ")
            );
            let _ = writeln!(
                svg,
                r#"<text class="legend" x="{:.2}" y="{:.2}" fill="{color}">{e} roof (knee {})</text>"#,
                f.right() + 10.0,
                MARGIN_TOP + 14.0 * i as f64 + 4.0,
                fmt_sig6(self.profile.knee_ai(e)?)
            );
        }
        for p in self.points.iter().filter(|p| p.ai > 0.0 && p.flops_per_s > 0.0) {
            let _ = writeln!(
                svg,
                r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="black"><title>{}</title></circle>"#,
                f.px(p.ai.log10()),
                f.py(p.flops_per_s.log10()),
                escape(&p.label)
            );
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }
}

/// Writes `series` to `path` in `format`.
pub fn emit(series: &[Series], format: OutputFormat, path: impl AsRef<Path>, opts: &SvgOptions) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    match format {
        OutputFormat::Csv => write_series_csv(series, &mut buf).map_err(|e| Error::io(path, e))?,
        OutputFormat::Json => write_series_json(series, &mut buf).map_err(|e| Error::io(path, e))?,
        OutputFormat::Svg => buf = render_series_svg(series, opts)?.into_bytes(),
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
