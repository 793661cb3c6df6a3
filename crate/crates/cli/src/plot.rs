//! SVG figures.

use std::path::Path;

use plotters::prelude::*;
use uavcoop::sim::SlotRecord;
use uavcoop::{Error, Result, Scenario, Scheme};

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

fn draw_err<E: std::error::Error + Send + Sync + 'static>(e: DrawingAreaErrorKind<E>) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Mean sum rate (Mbit/s) with 95% intervals against subchannel count, one
/// line per scheme. Points are `(k, mean, low, high)` in bit/s.
pub fn sum_rate(path: &Path, series: &[(Scheme, Vec<(f64, f64, f64, f64)>)]) -> Result<()> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    for &(k, _, _, hi) in pts {
        x0 = x0.min(k);
        x1 = x1.max(k);
        y1 = y1.max(hi / 1e6);
    }
    if !x0.is_finite() {
        return Ok(());
    }
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .caption("Mean system sum rate", ("sans-serif", 20))
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d((x0 - 0.5)..(x1 + 0.5), 0.0..(y1 * 1.1).max(1e-3))
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("subchannels")
        .y_desc("sum rate (Mbit/s)")
        .draw()
        .map_err(draw_err)?;
    for (i, (scheme, p)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(p.iter().map(|&(k, m, _, _)| (k, m / 1e6)), color.stroke_width(2)))
            .map_err(draw_err)?
            .label(scheme.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
        chart
            .draw_series(p.iter().map(|&(k, _, lo, hi)| {
                PathElement::new(vec![(k, lo / 1e6), (k, hi / 1e6)], color.stroke_width(1))
            }))
            .map_err(draw_err)?;
        chart
            .draw_series(p.iter().map(|&(k, m, _, _)| Circle::new((k, m / 1e6), 3, color.filled())))
            .map_err(draw_err)?;
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}

/// Top-down flight paths, task centers and the BS.
pub fn trajectories(path: &Path, scenario: &Scenario, records: &[SlotRecord]) -> Result<()> {
    let root = SVGBackend::new(path, (640, 640)).into_drawing_area();
    root.fill(&WHITE).map_err(draw_err)?;
    let mut xs = vec![scenario.bs.x];
    let mut ys = vec![scenario.bs.y];
    for t in &scenario.tasks {
        xs.push(t.center.x);
        ys.push(t.center.y);
    }
    for u in &scenario.uavs {
        xs.push(u.position.x);
        ys.push(u.position.y);
    }
    for r in records {
        for u in &r.uavs {
            xs.push(u.position.x);
            ys.push(u.position.y);
        }
    }
    let lo = xs.iter().chain(&ys).copied().fold(f64::INFINITY, f64::min) - 100.0;
    let hi = xs.iter().chain(&ys).copied().fold(f64::NEG_INFINITY, f64::max) + 100.0;
    let mut chart = ChartBuilder::on(&root)
        .margin(20)
        .caption(format!("Trajectories ({})", scenario.scheme), ("sans-serif", 20))
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(lo..hi, lo..hi)
        .map_err(draw_err)?;
    chart
        .configure_mesh()
        .x_desc("x (m)")
        .y_desc("y (m)")
        .draw()
        .map_err(draw_err)?;
    chart
        .draw_series(std::iter::once(TriangleMarker::new((scenario.bs.x, scenario.bs.y), 8, BLACK.filled())))
        .map_err(draw_err)?
        .label("BS")
        .legend(|(x, y)| TriangleMarker::new((x + 10, y), 6, BLACK.filled()));
    chart
        .draw_series(
            scenario
                .tasks
                .iter()
                .map(|t| Cross::new((t.center.x, t.center.y), 5, BLACK.stroke_width(1))),
        )
        .map_err(draw_err)?;
    for (i, u) in scenario.uavs.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = vec![(u.position.x, u.position.y)];
        path.extend(records.iter().map(|r| (r.uavs[i].position.x, r.uavs[i].position.y)));
        chart
            .draw_series(LineSeries::new(path, color.stroke_width(2)))
            .map_err(draw_err)?
            .label(format!("UAV {}", u.id))
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()
        .map_err(draw_err)?;
    root.present().map_err(draw_err)?;
    Ok(())
}
