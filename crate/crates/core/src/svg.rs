//! Hand-rolled standalone SVG line charts: polylines, axes, ticks, legend,
//! optional shaded intervals. No timestamps or randomness, so identical
//! inputs produce byte-identical files.

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Shaded x-intervals (pulse windows).
    pub shaded: Vec<(f64, f64)>,
    pub width: f64,
    pub height: f64,
}

impl Default for LinePlot {
    fn default() -> Self {
        Self {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            series: Vec::new(),
            shaded: Vec::new(),
            width: 860.0,
            height: 460.0,
        }
    }
}

fn fmt_coord(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-3..1e5).contains(&a) {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.').to_string();
        if s.is_empty() || s == "-" {
            "0".to_string()
        } else {
            s
        }
    } else {
        format!("{v:.2e}")
    }
}

/// Tick positions covering [min, max] with a 1/2/5 x 10^k step.
fn ticks(min: f64, max: f64, target: usize) -> Vec<f64> {
    let span = (max - min).abs().max(1e-300);
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|&s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let first = (min / step).ceil();
    let mut out = Vec::new();
    let mut k = first;
    while k * step <= max + 1e-12 * span {
        out.push(k * step);
        k += 1.0;
    }
    out
}

impl LinePlot {
    pub fn render(&self) -> String {
        let (ml, mr, mt, mb) = (72.0, 24.0, 40.0, 52.0);
        let pw = self.width - ml - mr;
        let ph = self.height - mt - mb;

        let mut xs: Vec<f64> = Vec::new();
        let mut ys: Vec<f64> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                if x.is_finite() && y.is_finite() {
                    xs.push(x);
                    ys.push(y);
                }
            }
        }
        let (x0, x1) = min_max(&xs).unwrap_or((0.0, 1.0));
        let (mut y0, mut y1) = min_max(&ys).unwrap_or((0.0, 1.0));
        if (y1 - y0).abs() < 1e-300 {
            y0 -= 1.0;
            y1 += 1.0;
        } else {
            let pad = 0.06 * (y1 - y0);
            y0 -= pad;
            y1 += pad;
        }
        let sx = move |x: f64| ml + (x - x0) / (x1 - x0).max(1e-300) * pw;
        let sy = move |y: f64| mt + ph - (y - y0) / (y1 - y0).max(1e-300) * ph;

        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" \
             viewBox=\"0 0 {} {}\" font-family=\"sans-serif\">\n",
            self.width, self.height, self.width, self.height
        ));
        out.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
            self.width, self.height
        ));

        for &(a, b) in &self.shaded {
            let (a, b) = (a.max(x0), b.min(x1));
            if b <= a {
                continue;
            }
            out.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"#f2c94c\" fill-opacity=\"0.35\"/>\n",
                fmt_coord(sx(a)),
                fmt_coord(mt),
                fmt_coord(sx(b) - sx(a)),
                fmt_coord(ph)
            ));
        }

        for t in ticks(x0, x1, 8) {
            let x = sx(t);
            out.push_str(&format!(
                "<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#dddddd\"/>\n",
                fmt_coord(x),
                fmt_coord(mt),
                fmt_coord(mt + ph)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
                fmt_coord(x),
                fmt_coord(mt + ph + 18.0),
                fmt_tick(t)
            ));
        }
        for t in ticks(y0, y1, 6) {
            let y = sy(t);
            out.push_str(&format!(
                "<line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#dddddd\"/>\n",
                fmt_coord(y),
                fmt_coord(ml),
                fmt_coord(ml + pw)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\">{}</text>\n",
                fmt_coord(ml - 6.0),
                fmt_coord(y + 4.0),
                fmt_tick(t)
            ));
        }

        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
            fmt_coord(ml),
            fmt_coord(mt),
            fmt_coord(pw),
            fmt_coord(ph)
        ));

        for (i, s) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{},{}", fmt_coord(sx(x)), fmt_coord(sy(y))))
                .collect();
            out.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
                pts.join(" "),
                color
            ));
            let ly = mt + 16.0 + 16.0 * i as f64;
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                fmt_coord(ml + pw - 120.0),
                fmt_coord(ly - 4.0),
                fmt_coord(ml + pw - 96.0),
                fmt_coord(ly - 4.0),
                color
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
                fmt_coord(ml + pw - 90.0),
                fmt_coord(ly),
                escape(&s.label)
            ));
        }

        if !self.title.is_empty() {
            out.push_str(&format!(
                "<text x=\"{}\" y=\"22\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
                fmt_coord(ml + pw / 2.0),
                escape(&self.title)
            ));
        }
        if !self.x_label.is_empty() {
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
                fmt_coord(ml + pw / 2.0),
                fmt_coord(self.height - 12.0),
                escape(&self.x_label)
            ));
        }
        if !self.y_label.is_empty() {
            out.push_str(&format!(
                "<text x=\"16\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" \
                 transform=\"rotate(-90 16 {})\">{}</text>\n",
                fmt_coord(mt + ph / 2.0),
                fmt_coord(mt + ph / 2.0),
                escape(&self.y_label)
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}

fn min_max(vals: &[f64]) -> Option<(f64, f64)> {
    let mut it = vals.iter().copied();
    let first = it.next()?;
    let mut lo = first;
    let mut hi = first;
    for v in it {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Some((lo, hi))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
