//! Static SVG figures: curve overlays, length/area histories and step sizes.

use std::path::Path;

use curveflow::{Snapshot, StepRecord};
use plotters::prelude::*;

pub type PlotResult = Result<(), Box<dyn std::error::Error>>;

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1e-12) };
    (lo - pad, hi + pad)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo.is_finite() {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

/// Overlays every snapshot, lightest first.
pub fn curves(path: &Path, snapshots: &[Snapshot]) -> PlotResult {
    let pts = || snapshots.iter().flat_map(|s| s.curve.vertices().iter());
    let (x0, x1) = padded(bounds(pts().map(|p| p.x)).0, bounds(pts().map(|p| p.x)).1);
    let (y0, y1) = padded(bounds(pts().map(|p| p.y)).0, bounds(pts().map(|p| p.y)).1);
    // equal aspect
    let side = 600.0;
    let h = (side * (y1 - y0) / (x1 - x0)).clamp(200.0, 1200.0);
    let root = SVGBackend::new(path, (side as u32 + 60, h as u32 + 60)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(x0..x1, y0..y1)?;
    chart.configure_mesh().disable_mesh().draw()?;
    let k = snapshots.len().max(2) - 1;
    for (j, s) in snapshots.iter().enumerate() {
        let shade = 200 - (200 * j / k) as u8;
        let colour = RGBColor(shade, shade, 255);
        let mut line: Vec<(f64, f64)> = s.curve.vertices().iter().map(|p| (p.x, p.y)).collect();
        line.push(line[0]);
        chart.draw_series(LineSeries::new(line, colour.stroke_width(1)))?;
    }
    root.present()?;
    Ok(())
}

/// Length and area against time, one panel each.
pub fn length_area(path: &Path, records: &[StepRecord]) -> PlotResult {
    let root = SVGBackend::new(path, (700, 600)).into_drawing_area();
    root.fill(&WHITE)?;
    let panels = root.split_evenly((2, 1));
    let (t0, t1) = padded(bounds(records.iter().map(|r| r.t)).0, bounds(records.iter().map(|r| r.t)).1);
    let series: [(&str, fn(&StepRecord) -> f64); 2] = [("length", |r| r.length), ("area", |r| r.area)];
    for (area, (name, get)) in panels.iter().zip(series) {
        let (lo, hi) = bounds(records.iter().map(get));
        let (lo, hi) = padded(lo, hi);
        let mut chart = ChartBuilder::on(area)
            .margin(10)
            .caption(name, ("sans-serif", 16))
            .x_label_area_size(30)
            .y_label_area_size(60)
            .build_cartesian_2d(t0..t1, lo..hi)?;
        chart.configure_mesh().x_desc("t").draw()?;
        chart.draw_series(LineSeries::new(records.iter().map(|r| (r.t, get(r))), &BLUE))?;
    }
    root.present()?;
    Ok(())
}

/// Accepted step sizes against time on a log axis.
pub fn step_sizes(path: &Path, records: &[StepRecord]) -> PlotResult {
    let steps: Vec<(f64, f64)> = records.iter().filter(|r| r.dt > 0.0).map(|r| (r.t, r.dt)).collect();
    let root = SVGBackend::new(path, (700, 400)).into_drawing_area();
    root.fill(&WHITE)?;
    let (t0, t1) = padded(bounds(steps.iter().map(|s| s.0)).0, bounds(steps.iter().map(|s| s.0)).1);
    let (lo, hi) = bounds(steps.iter().map(|s| s.1));
    let (lo, hi) = if steps.is_empty() { (1e-3, 1.0) } else { (lo / 2.0, hi * 2.0) };
    let mut chart = ChartBuilder::on(&root)
        .margin(10)
        .caption("step size", ("sans-serif", 16))
        .x_label_area_size(30)
        .y_label_area_size(70)
        .build_cartesian_2d(t0..t1, (lo..hi).log_scale())?;
    chart.configure_mesh().x_desc("t").y_label_formatter(&|v| format!("{v:.0e}")).draw()?;
    chart.draw_series(LineSeries::new(steps.iter().copied(), &RED))?;
    chart.draw_series(steps.iter().map(|&p| Circle::new(p, 2, RED.filled())))?;
    root.present()?;
    Ok(())
}
