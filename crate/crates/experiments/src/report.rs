//! Records to CSV/JSON and figures to SVG/PNG.
//!
//! Files land under `<run>/records/<name>.{csv,json}` and
//! `<run>/plots/<name>.{svg,png}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use jsc_core::{Error, Result};
use plotters::coord::Shift;
use plotters::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::sweeps::{PerRecord, ResultRecord};

pub const FONT_ENV: &str = "JSC_FONT";
const DEFAULT_FONTS: [&str; 2] = [
    "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
    "/usr/share/fonts/TTF/DejaVuSans.ttf",
];

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// CSV with a header row, also for an empty record list.
pub fn write_csv<R: Serialize>(path: &Path, records: &[R], header: &[&str]) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d)?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(!records.is_empty()).from_path(path).map_err(io_err)?;
    if records.is_empty() {
        w.write_record(header).map_err(io_err)?;
    } else {
        for r in records {
            w.serialize(r).map_err(io_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path).map_err(io_err)?;
    r.deserialize().map(|x| x.map_err(io_err)).collect()
}

pub fn write_json<R: Serialize>(path: &Path, records: &[R]) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(records).map_err(io_err)?)?;
    Ok(())
}

pub fn read_json<R: DeserializeOwned>(path: &Path) -> Result<Vec<R>> {
    serde_json::from_str(&std::fs::read_to_string(path)?).map_err(io_err)
}

pub const RESULT_HEADER: [&str; 18] = [
    "scheme",
    "lambda",
    "snr_s_train_db",
    "snr_s_test_db",
    "snr_n_db",
    "n_hops",
    "images",
    "psnr_mean",
    "psnr_std",
    "bpp",
    "bpp_z",
    "bpp_v",
    "b1_mean",
    "k_prime",
    "decode_failures",
    "wall_clock_s",
    "seed",
    "checkpoint",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
pub enum DataFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
pub enum PlotFormat {
    Svg,
    Png,
}

impl PlotFormat {
    fn ext(self) -> &'static str {
        match self {
            PlotFormat::Svg => "svg",
            PlotFormat::Png => "png",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, clap::ValueEnum)]
pub enum FigureKind {
    /// PSNR against hop count.
    Hops,
    /// PSNR against bpp, one curve per first-hop SNR.
    RateDistortion,
    /// PSNR and bpp against test SNR.
    Mismatch,
}

/// Write `records` as `<run>/records/<name>.<fmt>` and plot them into
/// `<run>/plots/<name>.<ext>`. Returns every path written.
pub fn emit_report(
    run_dir: &Path,
    name: &str,
    records: &[ResultRecord],
    formats: &[DataFormat],
    figure: Option<FigureKind>,
    plots: &[PlotFormat],
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for f in formats {
        let path = run_dir.join("records").join(format!(
            "{name}.{}",
            match f {
                DataFormat::Csv => "csv",
                DataFormat::Json => "json",
            }
        ));
        match f {
            DataFormat::Csv => write_csv(&path, records, &RESULT_HEADER)?,
            DataFormat::Json => write_json(&path, records)?,
        }
        written.push(path);
    }
    if let Some(kind) = figure {
        for p in plots {
            let path = run_dir.join("plots").join(format!("{name}.{}", p.ext()));
            plot_records(&path, kind, records)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn ensure_font() -> Result<()> {
    static FONT: OnceLock<std::result::Result<(), String>> = OnceLock::new();
    FONT.get_or_init(|| {
        let candidates: Vec<PathBuf> = std::env::var_os(FONT_ENV)
            .map(PathBuf::from)
            .into_iter()
            .chain(DEFAULT_FONTS.iter().map(PathBuf::from))
            .collect();
        for c in &candidates {
            if let Ok(bytes) = std::fs::read(c) {
                let bytes: &'static [u8] = Box::leak(bytes.into_boxed_slice());
                if plotters::style::register_font("sans-serif", FontStyle::Normal, bytes).is_ok() {
                    return Ok(());
                }
            }
        }
        Err(format!("no usable TrueType font; set {FONT_ENV}"))
    })
    .clone()
    .map_err(io_err)
}

/// A named polyline.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

pub struct Figure<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series>,
    pub log_y: bool,
}

pub fn plot_records(path: &Path, kind: FigureKind, records: &[ResultRecord]) -> Result<()> {
    let fig = match kind {
        FigureKind::Hops => {
            let mut by: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for r in records {
                let label = match r.lambda {
                    Some(l) => format!("{} (lambda={l})", r.scheme),
                    None => r.scheme.clone(),
                };
                by.entry(label).or_default().push((r.n_hops as f64, r.psnr_mean));
            }
            Figure {
                title: "PSNR vs. number of hops",
                x_label: "number of hops n",
                y_label: "PSNR (dB)",
                series: to_series(by),
                log_y: false,
            }
        }
        FigureKind::RateDistortion => {
            let mut by: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for r in records {
                by.entry(format!("SNR_s = {} dB", r.snr_s_test_db)).or_default().push((r.bpp, r.psnr_mean));
            }
            Figure {
                title: "Rate-distortion",
                x_label: "bpp",
                y_label: "PSNR (dB)",
                series: to_series(by),
                log_y: false,
            }
        }
        FigureKind::Mismatch => {
            let mut by: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
            for r in records {
                let label = format!("trained at {} dB", r.snr_s_train_db.unwrap_or(f64::NAN));
                by.entry(label).or_default().push((r.bpp, r.psnr_mean));
            }
            Figure {
                title: "SNR mismatch",
                x_label: "bpp",
                y_label: "PSNR (dB)",
                series: to_series(by),
                log_y: false,
            }
        }
    };
    draw(path, &fig)
}

pub fn plot_per(path: &Path, records: &[PerRecord]) -> Result<()> {
    let mut by: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        // zero PER cannot be drawn on a log axis; show it at the resolution floor
        let floor = 0.5 / r.blocks.max(1) as f64;
        by.entry(format!("{}-QAM, rate {:.2}", r.qam_order, r.code_rate))
            .or_default()
            .push((r.snr_db, r.per.max(floor)));
    }
    draw(
        path,
        &Figure {
            title: "Packet error rate",
            x_label: "SNR (dB)",
            y_label: "PER",
            series: to_series(by),
            log_y: true,
        },
    )
}

fn to_series(by: BTreeMap<String, Vec<(f64, f64)>>) -> Vec<Series> {
    by.into_iter()
        .map(|(label, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label, points }
        })
        .collect()
}

fn bounds(series: &[Series], log: bool) -> ((f64, f64), (f64, f64)) {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return ((0.0, 1.0), if log { (1e-4, 1.0) } else { (0.0, 1.0) });
    }
    let pad = |a: f64, b: f64| {
        let d = if b > a { 0.05 * (b - a) } else { 0.5 };
        (a - d, b + d)
    };
    let y = if log { (y0 / 2.0, (y1 * 2.0).min(1.0).max(y0)) } else { pad(y0, y1) };
    (pad(x0, x1), y)
}

pub fn draw(path: &Path, fig: &Figure<'_>) -> Result<()> {
    ensure_font()?;
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d)?;
    }
    let size = (800, 560);
    match path.extension().and_then(|e| e.to_str()) {
        Some("svg") => render(SVGBackend::new(path, size).into_drawing_area(), fig),
        Some("png") => render(BitMapBackend::new(path, size).into_drawing_area(), fig),
        _ => Err(Error::InvalidArgument(format!("unsupported plot format: {}", path.display()))),
    }
}

fn render<DB: DrawingBackend>(root: DrawingArea<DB, Shift>, fig: &Figure<'_>) -> Result<()>
where
    DB::ErrorType: 'static,
{
    root.fill(&WHITE).map_err(io_err)?;
    let ((x0, x1), (y0, y1)) = bounds(&fig.series, fig.log_y);
    let mut builder = ChartBuilder::on(&root);
    builder
        .caption(fig.title, ("sans-serif", 24))
        .margin(16)
        .x_label_area_size(44)
        .y_label_area_size(60);
    macro_rules! body {
        ($chart:expr) => {{
            let mut chart = $chart;
            chart
                .configure_mesh()
                .x_desc(fig.x_label)
                .y_desc(fig.y_label)
                .draw()
                .map_err(io_err)?;
            for (i, s) in fig.series.iter().enumerate() {
                let color = Palette99::pick(i).to_rgba();
                let pts: Vec<(f64, f64)> = s.points.iter().copied().filter(|p| p.0.is_finite() && p.1.is_finite()).collect();
                chart
                    .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
                    .map_err(io_err)?
                    .label(s.label.clone())
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
                chart
                    .draw_series(pts.iter().map(|&p| Circle::new(p, 4, color.filled())))
                    .map_err(io_err)?;
            }
            if !fig.series.is_empty() {
                chart
                    .configure_series_labels()
                    .background_style(WHITE.mix(0.8))
                    .border_style(BLACK)
                    .draw()
                    .map_err(io_err)?;
            }
        }};
    }
    if fig.log_y {
        body!(builder.build_cartesian_2d(x0..x1, (y0..y1).log_scale()).map_err(io_err)?);
    } else {
        body!(builder.build_cartesian_2d(x0..x1, y0..y1).map_err(io_err)?);
    }
    root.present().map_err(io_err)?;
    Ok(())
}
