//! Minimal self-contained SVG charts: grouped bars with error whiskers
//! and multi-series line plots. No external assets; a version comment is
//! embedded in every file.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 42.0;
const MARGIN_B: f64 = 64.0;

const PALETTE: [&str; 6] = ["#4878cf", "#d65f5f", "#6acc65", "#b47cc7", "#c4ad66", "#77bedb"];

pub struct Bar {
    pub name: String,
    pub value: f64,
    /// Half-length of the error whisker (0 for none).
    pub err: f64,
}

pub struct BarGroup {
    pub label: String,
    pub bars: Vec<Bar>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n\
         <!-- housenav-plot v1 -->\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\" fill=\"#222\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    )
}

/// Tick positions: 5 even steps from 0 (bars) or the data minimum (lines).
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-12);
    (0..=5).map(|i| lo + span * i as f64 / 5.0).collect()
}

fn fmt_tick(v: f64, span: f64) -> String {
    if span >= 1000.0 {
        if v.abs() >= 1_000_000.0 {
            format!("{:.1}M", v / 1e6)
        } else if v.abs() >= 1000.0 {
            format!("{:.0}k", v / 1e3)
        } else {
            format!("{v:.0}")
        }
    } else if span >= 10.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn y_axis(svg: &mut String, y_label: &str, lo: f64, hi: f64) {
    let span = hi - lo;
    for t in ticks(lo, hi) {
        let y = MARGIN_T + (HEIGHT - MARGIN_T - MARGIN_B) * (1.0 - (t - lo) / span.max(1e-12));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\" fill=\"#444\">{}</text>\n",
            WIDTH - MARGIN_R,
            MARGIN_L - 6.0,
            y + 4.0,
            fmt_tick(t, span)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" font-size=\"12\" fill=\"#222\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        esc(y_label)
    ));
}

fn frame(svg: &mut String) {
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"#222\"/>\n",
        WIDTH - MARGIN_L - MARGIN_R,
        HEIGHT - MARGIN_T - MARGIN_B
    ));
}

/// Grouped bar chart with error whiskers and a legend when groups hold
/// more than one bar.
pub fn bar_chart(title: &str, y_label: &str, groups: &[BarGroup]) -> String {
    let mut svg = open(title);
    let hi = groups
        .iter()
        .flat_map(|g| g.bars.iter().map(|b| b.value + b.err))
        .fold(1e-9f64, f64::max)
        * 1.1;
    y_axis(&mut svg, y_label, 0.0, hi);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let n_groups = groups.len().max(1) as f64;
    let group_w = plot_w / n_groups;
    for (gi, g) in groups.iter().enumerate() {
        let n_bars = g.bars.len().max(1) as f64;
        let bar_w = (group_w * 0.8) / n_bars;
        for (bi, b) in g.bars.iter().enumerate() {
            let x = MARGIN_L + group_w * (gi as f64 + 0.1) + bar_w * bi as f64;
            let h = plot_h * (b.value / hi).clamp(0.0, 1.0);
            let y = MARGIN_T + plot_h - h;
            let color = PALETTE[bi % PALETTE.len()];
            svg.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{h:.1}\" fill=\"{color}\"/>\n",
                bar_w * 0.92
            ));
            if b.err > 0.0 {
                let cx = x + bar_w * 0.46;
                let e = plot_h * (b.err / hi);
                svg.push_str(&format!(
                    "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"#222\"/>\n\
                     <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#222\"/>\n\
                     <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#222\"/>\n",
                    y - e,
                    y + e,
                    cx - 4.0,
                    y - e,
                    cx + 4.0,
                    y - e,
                    cx - 4.0,
                    y + e,
                    cx + 4.0,
                    y + e
                ));
            }
        }
        let lx = MARGIN_L + group_w * (gi as f64 + 0.5);
        svg.push_str(&format!(
            "<text x=\"{lx:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#222\">{}</text>\n",
            HEIGHT - MARGIN_B + 16.0,
            esc(&g.label)
        ));
    }

    // Legend from the first group's bar names, when bars are distinct series.
    if groups.first().map(|g| g.bars.len() > 1).unwrap_or(false) {
        for (bi, b) in groups[0].bars.iter().enumerate() {
            let x = MARGIN_L + 10.0 + 110.0 * bi as f64;
            let y = HEIGHT - 14.0;
            svg.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n\
                 <text x=\"{:.1}\" y=\"{y:.1}\" font-size=\"11\" fill=\"#222\">{}</text>\n",
                y - 10.0,
                PALETTE[bi % PALETTE.len()],
                x + 16.0,
                esc(&b.name)
            ));
        }
    }

    frame(&mut svg);
    svg.push_str("</svg>\n");
    svg
}

/// Multi-series line chart; series are (label, (x, y) points).
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut svg = open(title);
    let points: Vec<(f64, f64)> = series.iter().flat_map(|(_, p)| p.iter().copied()).collect();
    let (x_lo, x_hi) = points.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let y_hi = points.iter().fold(1e-9f64, |hi, p| hi.max(p.1)) * 1.1;
    let (x_lo, x_hi) = if points.is_empty() { (0.0, 1.0) } else { (x_lo, x_hi.max(x_lo + 1e-9)) };
    y_axis(&mut svg, y_label, 0.0, y_hi);

    let plot_w = WIDTH - MARGIN_L - MARGIN_R;
    let plot_h = HEIGHT - MARGIN_T - MARGIN_B;
    let x_span = x_hi - x_lo;
    for t in ticks(x_lo, x_hi) {
        let x = MARGIN_L + plot_w * (t - x_lo) / x_span.max(1e-12);
        svg.push_str(&format!(
            "<text x=\"{x:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#444\">{}</text>\n",
            HEIGHT - MARGIN_B + 16.0,
            fmt_tick(t, x_span)
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" fill=\"#222\">{}</text>\n",
        MARGIN_L + plot_w / 2.0,
        HEIGHT - MARGIN_B + 34.0,
        esc(x_label)
    ));

    for (si, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        if !pts.is_empty() {
            let path: Vec<String> = pts
                .iter()
                .map(|(x, y)| {
                    format!(
                        "{:.1},{:.1}",
                        MARGIN_L + plot_w * (x - x_lo) / x_span.max(1e-12),
                        MARGIN_T + plot_h * (1.0 - (y / y_hi).clamp(0.0, 1.0))
                    )
                })
                .collect();
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
                path.join(" ")
            ));
        }
        let y = HEIGHT - 14.0 - 0.0;
        let x = MARGIN_L + 10.0 + 150.0 * si as f64;
        svg.push_str(&format!(
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{color}\" stroke-width=\"3\"/>\n\
             <text x=\"{:.1}\" y=\"{y:.1}\" font-size=\"11\" fill=\"#222\">{}</text>\n",
            y - 4.0,
            x + 14.0,
            y - 4.0,
            x + 18.0,
            esc(label)
        ));
    }

    frame(&mut svg);
    svg.push_str("</svg>\n");
    svg
}
