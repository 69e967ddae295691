//! Minimal SVG line charts for the CSV files written by the other commands.

use std::fmt::Write as _;
use std::io::BufReader;
use std::path::Path;

use pgrad::experiments::{aggregate_stats, read_sweep_csv, read_training_csv, SweepRecord, TrainingCurve};

use crate::config::{CliError, CliResult};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(x, y, std)`; a band is drawn when every point has a spread.
    pub points: Vec<(f64, f64, Option<f64>)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub series: Vec<Series>,
}

/// Reads a sweep or training CSV and builds the matching chart.
pub fn chart_from_csv(path: &Path) -> CliResult<Chart> {
    let open = || -> CliResult<BufReader<std::fs::File>> {
        Ok(BufReader::new(std::fs::File::open(path).map_err(|e| {
            CliError::Runtime(format!("cannot open {}: {e}", path.display()))
        })?))
    };
    let chart = match read_sweep_csv(open()?) {
        Ok(records) => sweep_chart(&records),
        Err(sweep_err) => match read_training_csv(open()?) {
            Ok(curves) => training_chart(&curves)?,
            Err(train_err) => {
                return Err(CliError::Runtime(format!(
                    "{} is neither a sweep CSV ({sweep_err}) nor a training CSV ({train_err})",
                    path.display()
                )))
            }
        },
    };
    if chart.series.iter().all(|s| s.points.is_empty()) {
        return Err(CliError::Runtime(format!("{} has no data rows", path.display())));
    }
    Ok(chart)
}

/// One series per algorithm and discount. Baseline sweeps are plotted
/// against `b / r_bar`, everything else against the step count.
pub fn sweep_chart(records: &[SweepRecord]) -> Chart {
    let swept = !records.is_empty() && records.iter().all(|r| r.b_ratio.is_some());
    let mut series: Vec<Series> = Vec::new();
    for r in records {
        let label = format!("{} gamma={}", r.algorithm, r.gamma);
        let x = if swept { r.b_ratio.unwrap_or_default() } else { r.steps as f64 };
        let point = (x, r.mean_relative_error, Some(r.std_relative_error));
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push(point),
            None => series.push(Series {
                label,
                points: vec![point],
            }),
        }
    }
    Chart {
        title: if swept { "constant baseline sweep" } else { "relative error" }.into(),
        x_label: if swept { "b / average reward" } else { "steps" }.into(),
        y_label: "relative error".into(),
        log_x: !swept,
        series,
    }
}

/// Mean curve per algorithm with a band of one standard deviation across
/// seeds. Diverged seeds are left out.
pub fn training_chart(curves: &[TrainingCurve]) -> CliResult<Chart> {
    let mut algorithms = Vec::new();
    for c in curves {
        if !algorithms.contains(&c.algorithm) {
            algorithms.push(c.algorithm);
        }
    }
    let mut series = Vec::new();
    for alg in algorithms {
        let group: Vec<TrainingCurve> = curves
            .iter()
            .filter(|c| c.algorithm == alg && c.diverged_at.is_none())
            .cloned()
            .collect();
        let points = match group.len() {
            0 => Vec::new(),
            1 => group[0].points.iter().map(|p| (p.step as f64, p.average_reward, None)).collect(),
            _ => aggregate_stats(&group)
                .map_err(|e| CliError::Runtime(e.to_string()))?
                .iter()
                .map(|b| (b.step as f64, b.mean, Some(b.std)))
                .collect(),
        };
        series.push(Series {
            label: format!("{alg} ({} seeds)", group.len()),
            points,
        });
    }
    Ok(Chart {
        title: "training".into(),
        x_label: "steps".into(),
        y_label: "average reward".into(),
        log_x: false,
        series,
    })
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(chart: &Chart) -> String {
    let tx = |x: f64| if chart.log_x { x.max(f64::MIN_POSITIVE).log10() } else { x };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for s in &chart.series {
        for &(x, y, sd) in &s.points {
            xs.push(tx(x));
            let sd = sd.unwrap_or(0.0);
            ys.push(y - sd);
            ys.push(y + sd);
        }
    }
    let fold = |v: &[f64]| v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let (x0, x1) = nice_range(fold(&xs).0, fold(&xs).1);
    let (y0, y1) = nice_range(fold(&ys).0, fold(&ys).1);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (tx(x) - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + plot_w / 2.0,
        escape(&chart.title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{LEFT:.2},{TOP:.2} V{:.2} H{:.2}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let xl = if chart.log_x { 10f64.powf(xv) } else { xv };
        let sx = LEFT + f * plot_w;
        let _ = writeln!(
            svg,
            r#"<line x1="{sx:.2}" y1="{:.2}" x2="{sx:.2}" y2="{:.2}" stroke="black"/><text x="{sx:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 18.0,
            tick(xl)
        );
        let yv = y0 + f * (y1 - y0);
        let sy = TOP + (1.0 - f) * plot_h;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{sy:.2}" x2="{LEFT:.2}" y2="{sy:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            sy + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + plot_h / 2.0,
        escape(&chart.y_label)
    );

    for (i, s) in chart.series.iter().enumerate() {
        if s.points.is_empty() {
            continue;
        }
        let color = COLORS[i % COLORS.len()];
        if s.points.iter().all(|p| p.2.is_some()) {
            let mut pts: Vec<String> = s
                .points
                .iter()
                .map(|&(x, y, sd)| format!("{:.2},{:.2}", px(x), py(y + sd.unwrap_or(0.0))))
                .collect();
            pts.extend(
                s.points
                    .iter()
                    .rev()
                    .map(|&(x, y, sd)| format!("{:.2},{:.2}", px(x), py(y - sd.unwrap_or(0.0)))),
            );
            let _ = writeln!(
                svg,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" ")
            );
        }
        let pts: Vec<String> = s.points.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 10.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 20.0,
            lx + 25.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chart(series: Vec<Series>) -> Chart {
        Chart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_x: false,
            series,
        }
    }

    #[test]
    fn one_polyline_and_band_per_series() {
        let svg = render(&chart(vec![
            Series {
                label: "a".into(),
                points: vec![(0.0, 1.0, Some(0.1)), (1.0, 2.0, Some(0.2))],
            },
            Series {
                label: "b<c".into(),
                points: vec![(0.0, 0.5, None), (1.0, 0.7, None)],
            },
        ]));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("class=\"band\"").count(), 1);
        assert!(svg.contains("b&lt;c"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn single_point_and_flat_data_stay_finite() {
        let svg = render(&chart(vec![Series {
            label: "a".into(),
            points: vec![(3.0, 0.0, None)],
        }]));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
