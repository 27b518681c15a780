//! SVG figures: predatory incentives and welfare deltas against firm 0's
//! cost, and price paths of a single run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use oligopoly::{aggregate_regime, Algorithm, Information, RegimeLabel};
use plotters::coord::Shift;
use plotters::prelude::*;
use serde::Deserialize;

use crate::error::{ExpError, Result};
use crate::results::ResultRow;

/// Mean and sample standard deviation of a column per grid cost.
#[derive(Clone, Debug, PartialEq)]
pub struct Band {
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn band<'a>(rows: impl IntoIterator<Item = &'a ResultRow>, value: impl Fn(&ResultRow) -> Option<f64>) -> Band {
    let mut groups: BTreeMap<usize, (f64, Vec<f64>)> = BTreeMap::new();
    for r in rows.into_iter().filter(|r| r.is_ok()) {
        if let Some(v) = value(r).filter(|v| v.is_finite()) {
            groups.entry(r.c0_index).or_insert((r.c0, Vec::new())).1.push(v);
        }
    }
    let mut out = Band { x: Vec::new(), mean: Vec::new(), std: Vec::new() };
    for (x, vs) in groups.into_values() {
        let n = vs.len() as f64;
        let mean = vs.iter().sum::<f64>() / n;
        let var = if vs.len() > 1 { vs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        out.x.push(x);
        out.mean.push(mean);
        out.std.push(var.sqrt());
    }
    out
}

/// Majority regime per grid cost over all successful rows.
pub fn regime_by_cost(rows: &[ResultRow]) -> Vec<(f64, RegimeLabel)> {
    let mut groups: BTreeMap<usize, (f64, Vec<RegimeLabel>)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        if let Some(label) = r.regime {
            groups.entry(r.c0_index).or_insert((r.c0, Vec::new())).1.push(label);
        }
    }
    groups
        .into_values()
        .map(|(x, labels)| (x, aggregate_regime(&labels).expect("non-empty group")))
        .collect()
}

/// True when the labels never step back in the order dominance, predation,
/// competition, marginalization. `Other` breaks the order.
pub fn follows_regime_order(labels: &[RegimeLabel]) -> bool {
    let rank = |l: &RegimeLabel| match l {
        RegimeLabel::Dominance => Some(0),
        RegimeLabel::Predation => Some(1),
        RegimeLabel::Competition => Some(2),
        RegimeLabel::Marginalization => Some(3),
        RegimeLabel::Other => None,
    };
    let ranks: Option<Vec<u8>> = labels.iter().map(rank).collect();
    ranks.is_some_and(|r| r.windows(2).all(|w| w[0] <= w[1]))
}

fn regime_color(label: RegimeLabel) -> RGBColor {
    match label {
        RegimeLabel::Dominance => RGBColor(140, 20, 30),
        RegimeLabel::Predation => RGBColor(235, 130, 30),
        RegimeLabel::Competition => RGBColor(60, 150, 70),
        RegimeLabel::Marginalization => RGBColor(50, 90, 170),
        RegimeLabel::Other => RGBColor(150, 150, 150),
    }
}

const SERIES: [RGBColor; 4] = [RGBColor(200, 40, 40), RGBColor(40, 80, 200), RGBColor(30, 140, 60), RGBColor(150, 60, 170)];

type Fig<T> = std::result::Result<T, Box<dyn std::error::Error>>;

fn combos(rows: &[ResultRow]) -> Vec<(Algorithm, Information)> {
    let mut out: Vec<(Algorithm, Information)> = Vec::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        if !out.contains(&(r.algo, r.information)) {
            out.push((r.algo, r.information));
        }
    }
    out.sort_by_key(|(a, i)| (a.as_str(), i.to_string()));
    out
}

fn y_range(bands: &[&Band]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for b in bands {
        for (m, s) in b.mean.iter().zip(&b.std) {
            lo = lo.min(m - s);
            hi = hi.max(m + s);
        }
    }
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.08).max(1e-3);
    (lo - pad, hi + pad)
}

fn x_range(rows: &[ResultRow]) -> (f64, f64) {
    let xs = rows.iter().filter(|r| r.is_ok()).map(|r| r.c0);
    let lo = xs.clone().fold(f64::INFINITY, f64::min);
    let hi = xs.fold(f64::NEG_INFINITY, f64::max);
    if lo < hi {
        let pad = (hi - lo) * 0.02;
        (lo - pad, hi + pad)
    } else {
        (lo - 0.01, lo + 0.01)
    }
}

/// One panel with a mean line and a one-std band per series.
fn draw_bands<DB: DrawingBackend>(
    area: &DrawingArea<DB, Shift>,
    title: &str,
    y_label: &str,
    x: (f64, f64),
    series: &[(String, Band)],
) -> Fig<()>
where
    DB::ErrorType: 'static,
{
    let (y0, y1) = y_range(&series.iter().map(|s| &s.1).collect::<Vec<_>>());
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 16))
        .margin(8)
        .x_label_area_size(32)
        .y_label_area_size(56)
        .build_cartesian_2d(x.0..x.1, y0..y1)?;
    chart.configure_mesh().x_desc("c0").y_desc(y_label).light_line_style(WHITE.mix(0.0)).draw()?;
    for (k, (name, b)) in series.iter().enumerate() {
        let color = SERIES[k % SERIES.len()];
        let mut outline: Vec<(f64, f64)> = b.x.iter().zip(b.mean.iter().zip(&b.std)).map(|(&x, (m, s))| (x, m + s)).collect();
        outline.extend(b.x.iter().zip(b.mean.iter().zip(&b.std)).rev().map(|(&x, (m, s))| (x, m - s)));
        chart.draw_series(std::iter::once(Polygon::new(outline, color.mix(0.2).filled())))?;
        chart
            .draw_series(LineSeries::new(b.x.iter().copied().zip(b.mean.iter().copied()), color.stroke_width(2)))?
            .label(name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    Ok(())
}

/// Colored strip of the majority regime at each cost.
fn draw_regime_bar<DB: DrawingBackend>(area: &DrawingArea<DB, Shift>, x: (f64, f64), regimes: &[(f64, RegimeLabel)]) -> Fig<()>
where
    DB::ErrorType: 'static,
{
    let mut chart = ChartBuilder::on(area)
        .margin(8)
        .x_label_area_size(28)
        .y_label_area_size(56)
        .build_cartesian_2d(x.0..x.1, 0.0..1.0)?;
    chart
        .configure_mesh()
        .disable_mesh()
        .disable_y_axis()
        .x_desc("c0 (regime, majority vote)")
        .draw()?;
    for (k, &(c0, label)) in regimes.iter().enumerate() {
        let left = if k == 0 { x.0 } else { (regimes[k - 1].0 + c0) / 2.0 };
        let right = if k + 1 == regimes.len() { x.1 } else { (regimes[k + 1].0 + c0) / 2.0 };
        chart.draw_series(std::iter::once(Rectangle::new([(left, 0.0), (right, 1.0)], regime_color(label).filled())))?;
    }
    let mut seen: Vec<RegimeLabel> = regimes.iter().map(|r| r.1).collect();
    seen.sort();
    seen.dedup();
    for label in seen {
        let color = regime_color(label);
        chart
            .draw_series(std::iter::empty::<Rectangle<(f64, f64)>>())?
            .label(label.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 14, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .position(SeriesLabelPosition::UpperRight)
        .background_style(WHITE.mix(0.9))
        .border_style(BLACK)
        .draw()?;
    Ok(())
}

fn combo_title(algo: Algorithm, info: Information) -> String {
    let algo = match algo {
        Algorithm::Ppo => "PPO",
        Algorithm::Reinforce => "REINFORCE",
    };
    format!("{algo}, {info} information")
}

fn pi_figure(rows: &[ResultRow], path: &Path) -> Fig<()> {
    let combos = combos(rows);
    let x = x_range(rows);
    let root = SVGBackend::new(path, (1200, 420 * combos.len().div_ceil(2) as u32 + 120)).into_drawing_area();
    root.fill(&WHITE)?;
    let (upper, bar) = root.split_vertically(root.dim_in_pixel().1 - 120);
    let panels = upper.split_evenly((combos.len().div_ceil(2), 2.min(combos.len())));
    for (panel, &(algo, info)) in panels.iter().zip(&combos) {
        let subset: Vec<&ResultRow> = rows.iter().filter(|r| r.algo == algo && r.information == info).collect();
        let series: Vec<(String, Band)> = (0..3)
            .map(|i| (format!("agent {i}"), band(subset.iter().copied(), move |r| r.pi(i))))
            .collect();
        draw_bands(panel, &combo_title(algo, info), "predatory incentive", x, &series)?;
    }
    draw_regime_bar(&bar, x, &regime_by_cost(rows))?;
    root.present()?;
    Ok(())
}

fn welfare_figure(rows: &[ResultRow], path: &Path) -> Fig<()> {
    let combos = combos(rows);
    let x = x_range(rows);
    let root = SVGBackend::new(path, (1500, 540)).into_drawing_area();
    root.fill(&WHITE)?;
    let (upper, bar) = root.split_vertically(420);
    let panels = upper.split_evenly((1, 3));
    let columns: [(&str, fn(&ResultRow) -> Option<f64>); 3] =
        [("producer surplus delta", |r| r.d_ps), ("consumer surplus delta", |r| r.d_cs), ("welfare delta", |r| r.d_w)];
    for (panel, (title, value)) in panels.iter().zip(columns) {
        let series: Vec<(String, Band)> = combos
            .iter()
            .map(|&(algo, info)| {
                let subset = rows.iter().filter(|r| r.algo == algo && r.information == info);
                (combo_title(algo, info), band(subset, value))
            })
            .collect();
        draw_bands(panel, title, "difference to analytic equilibrium", x, &series)?;
    }
    draw_regime_bar(&bar, x, &regime_by_cost(rows))?;
    root.present()?;
    Ok(())
}

/// Writes `pi.svg` and `welfare.svg` into `out_dir`.
pub fn emit_figures(rows: &[ResultRow], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if !rows.iter().any(ResultRow::is_ok) {
        return Err(ExpError::Figure("no successful cells to plot".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let pi = out_dir.join("pi.svg");
    let welfare = out_dir.join("welfare.svg");
    pi_figure(rows, &pi).map_err(|e| ExpError::Figure(e.to_string()))?;
    welfare_figure(rows, &welfare).map_err(|e| ExpError::Figure(e.to_string()))?;
    Ok(vec![pi, welfare])
}

#[derive(Debug, Deserialize)]
struct TrajectoryRow {
    stage: usize,
    agent: usize,
    active: u8,
    price: f64,
}

/// Price paths of every firm from a trajectory CSV; a firm's line stops at
/// the last stage it played.
pub fn read_price_paths(path: &Path) -> Result<Vec<Vec<(usize, f64)>>> {
    let mut reader = csv::Reader::from_reader(crate::error::open_input(path)?);
    let mut paths: Vec<Vec<(usize, f64)>> = Vec::new();
    for rec in reader.deserialize() {
        let row: TrajectoryRow = rec?;
        if paths.len() <= row.agent {
            paths.resize(row.agent + 1, Vec::new());
        }
        if row.active == 1 {
            paths[row.agent].push((row.stage, row.price));
        }
    }
    Ok(paths)
}

fn strategy_figure(paths: &[Vec<(usize, f64)>], title: &str, path: &Path) -> Fig<()> {
    let stages = paths.iter().flatten().map(|p| p.0).max().unwrap_or(1);
    let prices = paths.iter().flatten().map(|p| p.1);
    let lo = prices.clone().fold(f64::INFINITY, f64::min);
    let hi = prices.fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.1).max(0.01);
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 16))
        .margin(10)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(0.8..stages as f64 + 0.2, lo - pad..hi + pad)?;
    chart
        .configure_mesh()
        .x_labels(stages)
        .x_label_formatter(&|v| format!("{v:.0}"))
        .x_desc("round")
        .y_desc("price")
        .draw()?;
    for (agent, pts) in paths.iter().enumerate() {
        let color = SERIES[agent % SERIES.len()];
        let pts: Vec<(f64, f64)> = pts.iter().map(|&(t, p)| (t as f64, p)).collect();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))?
            .label(format!("agent {agent}"))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart.draw_series(pts.into_iter().map(|p| Circle::new(p, 4, color.filled())))?;
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

/// Writes the strategy plot of one trajectory CSV to `out`.
pub fn emit_strategy_plot(trajectory_csv: &Path, title: &str, out: &Path) -> Result<()> {
    let paths = read_price_paths(trajectory_csv)?;
    if paths.iter().all(Vec::is_empty) {
        return Err(ExpError::Figure(format!("{} has no active rows", trajectory_csv.display())));
    }
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    strategy_figure(&paths, title, out).map_err(|e| ExpError::Figure(e.to_string()))
}
