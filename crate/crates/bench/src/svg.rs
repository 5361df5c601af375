//! Minimal SVG line charts and heatmaps. Output depends only on the input
//! values, so identical data gives byte-identical files.

use std::fmt::Write;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const FONT: &str = "font-family=\"sans-serif\" font-size=\"12\"";
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Anchors of a viridis-like ramp, evenly spaced over [0, 1].
const RAMP: [(u8, u8, u8); 5] = [
    (68, 1, 84),
    (59, 82, 139),
    (33, 145, 140),
    (94, 201, 98),
    (253, 231, 37),
];

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Fill color for a value in [0, 1]; values outside are clamped.
pub fn ramp_color(v: f64) -> String {
    let t = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let x = t * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let w = x - i as f64;
    let mix = |a: u8, b: u8| (f64::from(a) + w * (f64::from(b) - f64::from(a))).round() as u8;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Black text on the light end of the ramp, white on the dark end.
fn text_color(v: f64) -> &'static str {
    if v >= 0.6 {
        "#000000"
    } else {
        "#ffffff"
    }
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"25\" text-anchor=\"middle\" {FONT}>{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
}

/// One polyline per series over a fixed `[0, 1]` y-range.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let (x0, y0) = (LEFT, HEIGHT - BOTTOM);
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let x_max = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| p.0))
        .fold(0.0, f64::max);
    let x_max = if x_max > 0.0 { x_max } else { 1.0 };
    let px = |x: f64| x0 + pw * x / x_max;
    let py = |y: f64| y0 - ph * y.clamp(0.0, 1.0);

    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(
        out,
        "<rect x=\"{LEFT:.2}\" y=\"{TOP:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"#000000\"/>"
    );
    for k in 0..=4 {
        let y = k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>",
            x0,
            py(y),
            x0 + pw,
            py(y)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" {FONT}>{y:.2}</text>",
            x0 - 6.0,
            py(y) + 4.0
        );
        let x = x_max * k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{}</text>",
            px(x),
            y0 + 18.0,
            x.round()
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{}</text>",
        x0 + pw / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"20\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.2})\" {FONT}>{}</text>",
        y0 - ph / 2.0,
        y0 - ph / 2.0,
        escape(y_label)
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            out,
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>",
            coords.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        let _ = writeln!(
            out,
            "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            lx + 20.0
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" {FONT}>{}</text>",
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Color-mapped grid with values printed to two decimals; `None` cells are
/// drawn blank with a dash.
pub fn heatmap(
    title: &str,
    row_label: &str,
    col_label: &str,
    rows: &[String],
    cols: &[String],
    cells: &[Vec<Option<f64>>],
) -> String {
    let (pw, ph) = (WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM);
    let cw = pw / cols.len().max(1) as f64;
    let ch = ph / rows.len().max(1) as f64;
    let mut out = String::new();
    header(&mut out, title);
    for (r, row) in cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let x = LEFT + cw * c as f64;
            let y = TOP + ch * r as f64;
            let (fill, text, fg) = match cell {
                Some(v) => (ramp_color(*v), format!("{v:.2}"), text_color(*v)),
                None => ("#ffffff".to_string(), "\u{2013}".to_string(), "#000000"),
            };
            let _ = writeln!(
                out,
                "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{cw:.2}\" height=\"{ch:.2}\" fill=\"{fill}\" stroke=\"#ffffff\"/>"
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"{fg}\" {FONT}>{text}</text>",
                x + cw / 2.0,
                y + ch / 2.0 + 4.0
            );
        }
    }
    for (r, name) in rows.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" {FONT}>{}</text>",
            LEFT - 6.0,
            TOP + ch * (r as f64 + 0.5) + 4.0,
            escape(name)
        );
    }
    for (c, name) in cols.iter().enumerate() {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{}</text>",
            LEFT + cw * (c as f64 + 0.5),
            HEIGHT - BOTTOM + 18.0,
            escape(name)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" {FONT}>{}</text>",
        LEFT + pw / 2.0,
        HEIGHT - 15.0,
        escape(col_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"20\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {:.2})\" {FONT}>{}</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(row_label)
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints() {
        assert_eq!(ramp_color(0.0), "#440154");
        assert_eq!(ramp_color(1.0), "#fde725");
        assert_eq!(ramp_color(0.5), "#21918c");
        assert_eq!(ramp_color(-3.0), ramp_color(0.0));
    }

    #[test]
    fn constant_series_is_horizontal() {
        let svg = line_chart("t", "step", "acc", &[("a".into(), vec![(0.0, 0.5), (10.0, 0.5), (20.0, 0.5)])]);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        let ys: Vec<&str> = pts.split(' ').map(|p| p.split(',').nth(1).unwrap()).collect();
        assert!(ys.windows(2).all(|w| w[0] == w[1]));
        assert_eq!(ys[0], format!("{:.2}", HEIGHT - BOTTOM - (HEIGHT - TOP - BOTTOM) * 0.5));
    }

    #[test]
    fn missing_cell_is_dashed() {
        let svg = heatmap("h", "f", "gamma", &["1".into()], &["a".into(), "b".into()], &[vec![Some(0.25), None]]);
        assert!(svg.contains(">0.25<"));
        assert!(svg.contains(">\u{2013}<"));
        assert!(svg.contains(&ramp_color(0.25)));
    }
}
