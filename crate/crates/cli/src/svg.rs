//! Minimal hand-rolled SVG output for the report plots. Dependency-free
//! and deterministic, so tests can make structural assertions (bar and
//! whisker counts, labels) instead of pixel comparisons.

const ROW_H: f64 = 18.0;
const MARGIN_TOP: f64 = 34.0;
const LABEL_W: f64 = 110.0;
const PLOT_W: f64 = 420.0;

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

fn header(width: f64, height: f64, title: &str) -> String {
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n",
            "<text x=\"{tx}\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">{t}</text>\n"
        ),
        w = fmt(width),
        h = fmt(height),
        tx = fmt(width / 2.0),
        t = title
    )
}

/// Bootstrap means (circles) with confidence-interval whiskers (lines),
/// one row per feature. `highlight` marks pattern-defining features.
pub fn interval_plot(
    title: &str,
    features: &[String],
    means: &[f64],
    lowers: &[f64],
    uppers: &[f64],
    highlight: &[bool],
) -> String {
    let n = features.len();
    let height = MARGIN_TOP + ROW_H * n as f64 + 24.0;
    let width = LABEL_W + PLOT_W + 20.0;
    let max_val = uppers
        .iter()
        .chain(means.iter())
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let sx = |v: f64| LABEL_W + (v / max_val) * PLOT_W;

    let mut out = header(width, height, title);
    out.push_str(&format!(
        "<line class=\"axis\" x1=\"{x}\" y1=\"{y1}\" x2=\"{x}\" y2=\"{y2}\" stroke=\"#333\"/>\n",
        x = fmt(LABEL_W),
        y1 = fmt(MARGIN_TOP - 6.0),
        y2 = fmt(MARGIN_TOP + ROW_H * n as f64),
    ));
    for i in 0..n {
        let y = MARGIN_TOP + ROW_H * (i as f64 + 0.5);
        let color = if highlight.get(i).copied().unwrap_or(false) {
            "#c0392b"
        } else {
            "#555"
        };
        out.push_str(&format!(
            "<text class=\"feature\" x=\"{x}\" y=\"{y}\" text-anchor=\"end\" fill=\"{c}\">{t}</text>\n",
            x = fmt(LABEL_W - 6.0),
            y = fmt(y + 4.0),
            c = color,
            t = features[i]
        ));
        out.push_str(&format!(
            "<line class=\"interval\" x1=\"{x1}\" y1=\"{y}\" x2=\"{x2}\" y2=\"{y}\" stroke=\"{c}\" stroke-width=\"1.5\"/>\n",
            x1 = fmt(sx(lowers[i])),
            x2 = fmt(sx(uppers[i])),
            y = fmt(y),
            c = color
        ));
        out.push_str(&format!(
            "<circle class=\"mean\" cx=\"{cx}\" cy=\"{cy}\" r=\"3\" fill=\"{c}\"/>\n",
            cx = fmt(sx(means[i])),
            cy = fmt(y),
            c = color
        ));
    }
    out.push_str(&format!(
        "<text x=\"{x}\" y=\"{y}\" text-anchor=\"end\" fill=\"#333\">{m}</text>\n",
        x = fmt(LABEL_W + PLOT_W),
        y = fmt(height - 8.0),
        m = fmt(max_val)
    ));
    out.push_str("</svg>\n");
    out
}

/// Pattern coefficients as light bars with the affinity-scaled values as
/// dark overlay bars.
pub fn scaled_pattern_plot(
    title: &str,
    features: &[String],
    pattern: &[f64],
    scaled: &[f64],
) -> String {
    let n = features.len();
    let height = MARGIN_TOP + ROW_H * n as f64 + 24.0;
    let width = LABEL_W + PLOT_W + 20.0;
    let max_val = pattern.iter().cloned().fold(0.0f64, f64::max).max(1e-9);
    let sw = |v: f64| (v / max_val) * PLOT_W;

    let mut out = header(width, height, title);
    for i in 0..n {
        let y = MARGIN_TOP + ROW_H * i as f64 + 3.0;
        out.push_str(&format!(
            "<text class=\"feature\" x=\"{x}\" y=\"{ty}\" text-anchor=\"end\" fill=\"#555\">{t}</text>\n",
            x = fmt(LABEL_W - 6.0),
            ty = fmt(y + ROW_H / 2.0 + 2.0),
            t = features[i]
        ));
        out.push_str(&format!(
            "<rect class=\"pattern\" x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"#aed6f1\"/>\n",
            x = fmt(LABEL_W),
            y = fmt(y),
            w = fmt(sw(pattern[i])),
            h = fmt(ROW_H - 6.0)
        ));
        out.push_str(&format!(
            "<rect class=\"scaled\" x=\"{x}\" y=\"{y}\" width=\"{w}\" height=\"{h}\" fill=\"#2e86c1\"/>\n",
            x = fmt(LABEL_W),
            y = fmt(y + 2.0),
            w = fmt(sw(scaled[i])),
            h = fmt(ROW_H - 10.0)
        ));
    }
    out.push_str("</svg>\n");
    out
}
