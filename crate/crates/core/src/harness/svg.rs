//! Minimal SVG line charts: gap against iteration on a log10 gap axis.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// One polyline: a label and `(n, gap)` pairs. Nonpositive gaps are clipped to the floor.
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn gap_chart(title: &str, series: &[Series]) -> String {
    let positive = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|g| g.is_finite() && *g > 0.0);
    let (mut lo, mut hi) = positive.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), g| {
        (a.min(g), b.max(g))
    });
    if !lo.is_finite() {
        lo = 1e-3;
        hi = 1.0;
    }
    let (mut ylo, mut yhi) = (lo.log10().floor(), hi.log10().ceil());
    if yhi <= ylo {
        yhi = ylo + 1.0;
    }
    ylo = ylo.max(yhi - 16.0);
    let floor = 10f64.powf(ylo);
    let xmax = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(1.0, f64::max);

    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |n: f64| MARGIN_L + pw * n / xmax;
    let sy = |g: f64| {
        let v = if g.is_finite() && g > floor {
            g.log10()
        } else {
            ylo
        };
        MARGIN_T + ph * (yhi - v.min(yhi)) / (yhi - ylo)
    };

    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    writeln!(
        out,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    )
    .unwrap();
    let mut e = ylo as i32;
    while e as f64 <= yhi {
        let y = sy(10f64.powi(e));
        writeln!(
            out,
            r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{e}</text>"##,
            MARGIN_L + pw,
            MARGIN_L - 6.0,
            y + 4.0
        )
        .unwrap();
        e += 1;
    }
    for k in 0..=4 {
        let n = xmax * k as f64 / 4.0;
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(n),
            MARGIN_T + ph + 18.0,
            n.round()
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">iteration n</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 10.0
    )
    .unwrap();
    writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">|f(x_n) - f*|</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0
    )
    .unwrap();
    for (i, s) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .map(|&(n, g)| format!("{:.2},{:.2}", sx(n), sy(g)))
            .collect();
        writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"><title>{}</title></polyline>"#,
            pts.join(" "),
            escape(&s.label)
        )
        .unwrap();
        let ly = MARGIN_T + 14.0 + 14.0 * i as f64;
        writeln!(
            out,
            r#"<text x="{:.2}" y="{ly:.2}" fill="{colour}" text-anchor="end">{}</text>"#,
            MARGIN_L + pw - 6.0,
            escape(&s.label)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_well_formed() {
        let s = vec![
            Series {
                label: "seed 0".into(),
                points: vec![(0.0, 10.0), (10.0, 1.0), (100.0, 0.001)],
            },
            Series {
                label: "seed <1>".into(),
                points: vec![(0.0, 5.0), (100.0, 0.0)],
            },
        ];
        let svg = gap_chart("lambda = 0.1", &s);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("1e-3") && svg.contains("1e1"));
        assert!(svg.contains("seed &lt;1&gt;"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn empty_chart_still_renders() {
        let svg = gap_chart("empty", &[]);
        assert!(svg.contains("</svg>"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
