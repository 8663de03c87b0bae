//! Static SVG charts of the CSV tables written by a run. Rendering only:
//! nothing is recomputed from the physics.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{DetectionCurve, SweepResult, GRAY_ZONE_CAP};
use crate::engine::Trajectory;
use crate::error::PlotError;
use crate::report::{CURVES_HEADER, FBD_WAVEFORM_HEADER};

/// Numeric CSV table. `true`/`false` read as 1/0.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    fn col(&self, name: &str) -> Vec<f64> {
        self.column(name).unwrap_or_else(|| vec![f64::NAN; self.rows.len()])
    }

    fn header_line(&self) -> String {
        self.headers.join(",")
    }
}

fn parse_field(s: &str) -> Option<f64> {
    match s.trim() {
        "true" => Some(1.0),
        "false" => Some(0.0),
        "" => Some(f64::NAN),
        v => v.parse().ok(),
    }
}

/// Parses a header line plus numeric rows. Errors carry the 1-based line.
pub fn parse_table(text: &str) -> Result<Table, PlotError> {
    if text.trim().is_empty() {
        return Err(PlotError::Empty);
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| PlotError::Parse {
        line: e.position().map_or(0, |p| p.line()),
        message: e.to_string(),
    };
    let headers: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .zip(&headers)
            .map(|(v, h)| {
                parse_field(v).ok_or_else(|| PlotError::Parse {
                    line,
                    message: format!("column `{h}`: `{v}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(PlotError::Empty);
    }
    Ok(Table { headers, rows })
}

/// Renders the chart matching the table's columns.
pub fn render(table: &Table) -> Result<String, PlotError> {
    let h = table.header_line();
    if h == DetectionCurve::CSV_HEADER {
        Ok(render_detection(table))
    } else if h == SweepResult::CSV_HEADER {
        Ok(render_sweep(table))
    } else if h == CURVES_HEADER {
        Ok(render_curves(table))
    } else if h == Trajectory::CSV_HEADER {
        Ok(render_trajectory(table))
    } else if h == FBD_WAVEFORM_HEADER || h == "t_s,i_lfb_A,phi_plus_rad" {
        Ok(render_fbd(table))
    } else {
        Err(PlotError::UnknownLayout(h))
    }
}

/// Reads `csv`, renders it and writes `<stem>.svg` into `out_dir`. Nothing
/// is written if parsing or rendering fails.
pub fn plot_file(csv: &Path, out_dir: &Path) -> Result<PathBuf, PlotError> {
    let text = fs::read_to_string(csv).map_err(|source| PlotError::Io {
        path: csv.to_path_buf(),
        source,
    })?;
    let svg = render(&parse_table(&text)?)?;
    let stem = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let path = out_dir.join(format!("{stem}.svg"));
    fs::create_dir_all(out_dir)
        .and_then(|_| fs::write(&path, svg))
        .map_err(|source| PlotError::Io {
            path: path.clone(),
            source,
        })?;
    Ok(path)
}

const WIDTH: f64 = 720.0;
const PANEL_H: f64 = 360.0;
const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 56.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#7f7f7f",
];
const CAPPED_COLOR: &str = "#d62728";

struct Svg {
    body: String,
    height: f64,
}

impl Svg {
    fn new(panels: usize) -> Self {
        Svg {
            body: String::new(),
            height: PANEL_H * panels as f64,
        }
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = WIDTH,
            h = self.height
        )
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: &[f64], log: bool) -> Axis {
        let v: Vec<f64> = values
            .iter()
            .copied()
            .filter(|x| x.is_finite() && (!log || *x > 0.0))
            .map(|x| if log { x.log10() } else { x })
            .collect();
        let (mut lo, mut hi) = v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-300 {
            let pad = if lo == 0.0 { 0.5 } else { 0.1 * lo.abs() };
            lo -= pad;
            hi += pad;
        } else {
            let pad = 0.04 * (hi - lo);
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    fn fixed(lo: f64, hi: f64) -> Axis {
        Axis { lo, hi, log: false }
    }

    fn norm(&self, x: f64) -> f64 {
        let x = if self.log { x.log10() } else { x };
        (x - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let (a, b) = (self.lo.ceil() as i32, self.hi.floor() as i32);
            return (a..=b).map(|e| 10f64.powi(e)).collect();
        }
        let raw = (self.hi - self.lo) / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step + 1e-9).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn tick_label(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let a = x.abs();
    if (1e-2..1e4).contains(&a) {
        let s = format!("{x:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{x:.0e}")
    }
}

struct Panel {
    top: f64,
    x: Axis,
    y: Axis,
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        MARGIN_L + self.x.norm(x) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        let h = PANEL_H - MARGIN_T - MARGIN_B;
        self.top + MARGIN_T + (1.0 - self.y.norm(y)) * h
    }

    fn frame(&self, svg: &mut Svg, title: &str, xlabel: &str, ylabel: &str) {
        let b = &mut svg.body;
        let (l, r) = (MARGIN_L, WIDTH - MARGIN_R);
        let (t, bot) = (self.top + MARGIN_T, self.top + PANEL_H - MARGIN_B);
        let _ = writeln!(b, "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>", r - l, bot - t);
        for tx in self.x.ticks() {
            let x = self.px(tx);
            let _ = writeln!(b, "<line x1=\"{x:.2}\" y1=\"{bot}\" x2=\"{x:.2}\" y2=\"{t}\" stroke=\"#e0e0e0\"/>");
            let _ = writeln!(b, "<text x=\"{x:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>", bot + 16.0, tick_label(tx));
        }
        for ty in self.y.ticks() {
            let y = self.py(ty);
            let _ = writeln!(b, "<line x1=\"{l}\" y1=\"{y:.2}\" x2=\"{r}\" y2=\"{y:.2}\" stroke=\"#e0e0e0\"/>");
            let _ = writeln!(b, "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", l - 6.0, y + 4.0, tick_label(ty));
        }
        let _ = writeln!(b, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"14\">{}</text>", WIDTH / 2.0, self.top + 24.0, esc(title));
        let _ = writeln!(b, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>", (l + r) / 2.0, bot + 38.0, esc(xlabel));
        let cy = (t + bot) / 2.0;
        let _ = writeln!(b, "<text x=\"20\" y=\"{cy}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {cy})\">{}</text>", esc(ylabel));
    }

    /// Polyline broken at non-finite points.
    fn line(&self, svg: &mut Svg, xs: &[f64], ys: &[f64], color: &str) {
        let mut seg: Vec<String> = Vec::new();
        let flush = |seg: &mut Vec<String>, b: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(b, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>", seg.join(" "));
            }
            seg.clear();
        };
        for (&x, &y) in xs.iter().zip(ys) {
            if x.is_finite() && y.is_finite() && (!self.x.log || x > 0.0) {
                seg.push(format!("{:.2},{:.2}", self.px(x), self.py(y)));
            } else {
                flush(&mut seg, &mut svg.body);
            }
        }
        flush(&mut seg, &mut svg.body);
    }

    fn point(&self, svg: &mut Svg, x: f64, y: f64, color: &str) {
        let _ = writeln!(svg.body, "<circle class=\"point\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{color}\"/>", self.px(x), self.py(y));
    }

    fn capped_point(&self, svg: &mut Svg, x: f64, y: f64) {
        let (cx, cy) = (self.px(x), self.py(y));
        let _ = writeln!(
            svg.body,
            "<path class=\"capped\" d=\"M {:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2} Z\" fill=\"none\" stroke=\"{CAPPED_COLOR}\" stroke-width=\"2\"/>",
            cx, cy - 6.0, cx + 6.0, cy + 5.0, cx - 6.0, cy + 5.0
        );
    }

    fn error_bar(&self, svg: &mut Svg, x: f64, lo: f64, hi: f64, color: &str) {
        let (cx, a, b) = (self.px(x), self.py(lo), self.py(hi));
        let _ = writeln!(
            svg.body,
            "<path class=\"ci\" d=\"M {cx:.2} {a:.2} V {b:.2} M {:.2} {a:.2} H {:.2} M {:.2} {b:.2} H {:.2}\" stroke=\"{color}\" fill=\"none\"/>",
            cx - 3.0, cx + 3.0, cx - 3.0, cx + 3.0
        );
    }

    fn legend(&self, svg: &mut Svg, entries: &[(String, &str)]) {
        let x = WIDTH - MARGIN_R - 170.0;
        for (k, (label, color)) in entries.iter().enumerate() {
            let y = self.top + MARGIN_T + 14.0 + 16.0 * k as f64;
            let _ = writeln!(svg.body, "<rect x=\"{x}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{color}\"/>", y - 9.0);
            let _ = writeln!(svg.body, "<text x=\"{}\" y=\"{y}\">{}</text>", x + 14.0, esc(label));
        }
    }
}

fn wants_log(x: &[f64]) -> bool {
    let pos: Vec<f64> = x.iter().copied().filter(|v| v.is_finite()).collect();
    let min = pos.iter().copied().fold(f64::INFINITY, f64::min);
    let max = pos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    min > 0.0 && max / min >= 50.0
}

fn render_detection(t: &Table) -> String {
    let (x, p, lo, hi) = (t.col("phase_rad"), t.col("p_hat"), t.col("ci_low"), t.col("ci_high"));
    let mut svg = Svg::new(1);
    let panel = Panel {
        top: 0.0,
        x: Axis::fit(&x, false),
        y: Axis::fixed(-0.03, 1.03),
    };
    panel.frame(&mut svg, "Detection probability", "stimulus phase (rad)", "P(state 1)");
    panel.line(&mut svg, &x, &p, PALETTE[0]);
    for i in 0..x.len() {
        if p[i].is_finite() {
            panel.error_bar(&mut svg, x[i], lo[i], hi[i], PALETTE[0]);
            panel.point(&mut svg, x[i], p[i], PALETTE[0]);
        }
    }
    svg.finish()
}

fn render_sweep(t: &Table) -> String {
    let (x, f, g, capped) = (t.col("control"), t.col("fidelity"), t.col("gray_zone_rad"), t.col("capped"));
    let log = wants_log(&x);
    let xa = Axis::fit(&x, log);
    let mut svg = Svg::new(2);
    let mut fy = f.clone();
    fy.push(1.0);
    let top = Panel {
        top: 0.0,
        x: xa,
        y: Axis::fit(&fy, false),
    };
    top.frame(&mut svg, "Separation fidelity", "control", "fidelity");
    top.line(&mut svg, &x, &f, PALETTE[0]);
    let bottom = Panel {
        top: PANEL_H,
        x: xa,
        y: Axis::fixed(0.0, 1.1 * GRAY_ZONE_CAP),
    };
    bottom.frame(&mut svg, "Gray zone", "control", "gray zone (rad)");
    bottom.line(&mut svg, &x, &g, PALETTE[1]);
    for i in 0..x.len() {
        if f[i].is_finite() {
            top.point(&mut svg, x[i], f[i], PALETTE[0]);
        }
        if capped[i] == 1.0 {
            bottom.capped_point(&mut svg, x[i], g[i]);
        } else if g[i].is_finite() {
            bottom.point(&mut svg, x[i], g[i], PALETTE[1]);
        }
    }
    if capped.contains(&1.0) {
        bottom.legend(&mut svg, &[("capped at pi/2".to_string(), CAPPED_COLOR)]);
    }
    svg.finish()
}

fn render_curves(t: &Table) -> String {
    let (c, x, p) = (t.col("control"), t.col("phase_rad"), t.col("p_hat"));
    let mut controls: Vec<f64> = Vec::new();
    for v in &c {
        if !controls.iter().any(|u| u.to_bits() == v.to_bits()) {
            controls.push(*v);
        }
    }
    let mut svg = Svg::new(1);
    let panel = Panel {
        top: 0.0,
        x: Axis::fit(&x, false),
        y: Axis::fixed(-0.03, 1.03),
    };
    panel.frame(&mut svg, "Detection probability per sweep point", "stimulus phase (rad)", "P(state 1)");
    let mut legend = Vec::new();
    for (k, ctl) in controls.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let idx: Vec<usize> = (0..c.len()).filter(|&i| c[i].to_bits() == ctl.to_bits()).collect();
        let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let ps: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
        panel.line(&mut svg, &xs, &ps, color);
        for (a, b) in xs.iter().zip(&ps) {
            if b.is_finite() {
                panel.point(&mut svg, *a, *b, color);
            }
        }
        legend.push((tick_label(*ctl), color));
    }
    if legend.len() <= 12 {
        panel.legend(&mut svg, &legend);
    }
    svg.finish()
}

fn ns(v: &[f64]) -> Vec<f64> {
    v.iter().map(|t| t * 1e9).collect()
}

fn render_trajectory(t: &Table) -> String {
    let x = ns(&t.col("t_s"));
    let phi = t.col("phi_rad");
    let mut svg = Svg::new(1);
    let panel = Panel {
        top: 0.0,
        x: Axis::fit(&x, false),
        y: Axis::fit(&phi, false),
    };
    panel.frame(&mut svg, "Detector phase", "time (ns)", "phi (rad)");
    panel.line(&mut svg, &x, &phi, PALETTE[0]);
    svg.finish()
}

fn render_fbd(t: &Table) -> String {
    let x = ns(&t.col("t_s"));
    let i: Vec<f64> = t.col("i_lfb_A").iter().map(|v| v * 1e6).collect();
    let phi = t.col("phi_plus_rad");
    let mut svg = Svg::new(2);
    let top = Panel {
        top: 0.0,
        x: Axis::fit(&x, false),
        y: Axis::fit(&i, false),
    };
    top.frame(&mut svg, "Flux bias driver current", "time (ns)", "I_LFB (uA)");
    top.line(&mut svg, &x, &i, PALETTE[0]);
    let bottom = Panel {
        top: PANEL_H,
        x: Axis::fit(&x, false),
        y: Axis::fit(&phi, false),
    };
    bottom.frame(&mut svg, "Applied flux", "time (ns)", "phi_+ (rad)");
    bottom.line(&mut svg, &x, &phi, PALETTE[2]);
    svg.finish()
}
