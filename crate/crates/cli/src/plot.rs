use std::path::Path;

use plotters::prelude::*;

use crate::CliError;

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points }
    }
}

const COLORS: [RGBColor; 4] = [RGBColor(31, 119, 180), RGBColor(214, 39, 40), RGBColor(44, 160, 44), RGBColor(148, 103, 189)];

fn draw_err<E: std::fmt::Debug>(e: E) -> CliError {
    CliError::Io(format!("plot: {e:?}"))
}

fn bounds(series: &[Series], log_y: bool) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        return (0.0, 1.0, if log_y { 1e-3 } else { 0.0 }, 1.0);
    }
    if log_y {
        (x0, x1, y0, y1 * 1.5)
    } else {
        let pad = 0.05 * (y1 - y0).max(1e-9);
        (x0, x1.max(x0 + 1e-9), y0 - pad, y1 + pad)
    }
}

/// Line chart, optionally with a logarithmic y axis.
pub fn lines(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series], log_y: bool) -> Result<(), CliError> {
    let root = SVGBackend::new(path, (800, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let (x0, x1, y0, y1) = bounds(series, log_y);
    let mut builder = ChartBuilder::on(&root);
    builder.caption(title, ("sans-serif", 22)).margin(16).x_label_area_size(44).y_label_area_size(64);
    if log_y {
        let mut chart = builder.build_cartesian_2d(x0..x1, (y0..y1).log_scale()).map_err(draw_err)?;
        chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw().map_err(draw_err)?;
        for (i, s) in series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                .map_err(draw_err)?
                .label(s.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(draw_err)?;
    } else {
        let mut chart = builder.build_cartesian_2d(x0..x1, y0..y1).map_err(draw_err)?;
        chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw().map_err(draw_err)?;
        for (i, s) in series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            chart
                .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
                .map_err(draw_err)?
                .label(s.label.clone())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(draw_err)?;
    }
    root.present().map_err(draw_err)?;
    Ok(())
}

/// Side-by-side I/Q scatter panels.
pub fn constellations(path: &Path, title: &str, panels: &[Series]) -> Result<(), CliError> {
    let root = SVGBackend::new(path, (520 * panels.len().max(1) as u32, 560)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let root = root.titled(title, ("sans-serif", 22)).map_err(draw_err)?;
    for (i, (area, panel)) in root.split_evenly((1, panels.len().max(1))).iter().zip(panels).enumerate() {
        let mut chart = ChartBuilder::on(area)
            .caption(&panel.label, ("sans-serif", 18))
            .margin(16)
            .x_label_area_size(36)
            .y_label_area_size(44)
            .build_cartesian_2d(-1.6..1.6, -1.6..1.6)
            .map_err(draw_err)?;
        chart.configure_mesh().x_desc("I").y_desc("Q").draw().map_err(draw_err)?;
        let color = COLORS[i % COLORS.len()];
        chart
            .draw_series(panel.points.iter().map(|&(x, y)| Circle::new((x, y), 1, color.filled())))
            .map_err(draw_err)?;
    }
    root.present().map_err(draw_err)?;
    Ok(())
}
