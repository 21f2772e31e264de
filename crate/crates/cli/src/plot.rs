//! BER-vs-SNR waterfall as a standalone SVG.

use std::fmt::Write as _;

use cdma_ica::eval::CSV_HEADER;

use crate::CliError;

/// BER values below this (including zero) are drawn on the floor.
pub const BER_FLOOR: f64 = 1e-6;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub detector: String,
    /// `(snr_db, ber)`; NaN BER marks a point where every trial failed.
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub title: String,
    pub series: Vec<Series>,
}

/// Reads a results CSV; series keep first-appearance order.
pub fn parse_csv(text: &str) -> Result<Table, CliError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        Some((_, h)) => return Err(CliError::Runtime(format!("line 1: unexpected header '{h}'"))),
        None => return Err(CliError::Runtime("line 1: empty CSV".into())),
    }
    let mut title = None;
    let mut series: Vec<Series> = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(CliError::Runtime(format!("line {lineno}: expected 15 fields, found {}", f.len())));
        }
        let num = |idx: usize, what: &str| -> Result<f64, CliError> {
            f[idx]
                .trim()
                .parse::<f64>()
                .map_err(|_| CliError::Runtime(format!("line {lineno}: bad {what} '{}'", f[idx])))
        };
        let snr = num(6, "snr_db")?;
        let ber = num(12, "ber")?;
        if !snr.is_finite() || !(ber.is_nan() || (0.0..=1.0).contains(&ber)) {
            return Err(CliError::Runtime(format!("line {lineno}: value out of range")));
        }
        title.get_or_insert_with(|| {
            format!(
                "{} {} G={} K={} M={} L={} seed={}",
                f[0], f[1], f[2], f[3], f[4], f[5], f[14]
            )
        });
        let det = f[7].trim();
        match series.iter_mut().find(|s| s.detector == det) {
            Some(s) => s.points.push((snr, ber)),
            None => series.push(Series {
                detector: det.to_string(),
                points: vec![(snr, ber)],
            }),
        }
    }
    if series.is_empty() {
        return Err(CliError::Runtime("CSV has no data rows".into()));
    }
    Ok(Table {
        title: title.unwrap_or_default(),
        series,
    })
}

/// Average BER vs SNR, log-BER axis clamped at [`BER_FLOOR`].
pub fn render_svg(table: &Table) -> String {
    let all: Vec<(f64, f64)> = table.series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (mut x0, mut x1) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    if x1 <= x0 {
        x0 -= 1.0;
        x1 += 1.0;
    }
    let y_lo = BER_FLOOR.log10();
    let y_hi = 0.0;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |b: f64| TOP + (y_hi - b.max(BER_FLOOR).log10()) / (y_hi - y_lo) * ph;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Average BER vs SNR: {}</text>"#,
        LEFT + pw / 2.0,
        escape(&table.title)
    );
    // grid and axes
    for dec in (y_lo as i32)..=0 {
        let y = sy(10f64.powi(dec));
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">1e{dec}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for x in x_ticks(x0, x1) {
        let px = sx(x);
        let _ = writeln!(
            svg,
            r##"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="#eee"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{x}</text>"##,
            TOP + ph,
            TOP + ph + 16.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">SNR (dB)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">BER</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    let mut clamped = false;
    for (i, s) in table.series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<(f64, f64)> = s.points.iter().copied().filter(|p| !p.1.is_nan()).collect();
        let coords: Vec<String> = pts.iter().map(|&(x, b)| format!("{:.2},{:.2}", sx(x), sy(b))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline data-detector="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(&s.detector),
            coords.join(" ")
        );
        for &(x, b) in &pts {
            if b < BER_FLOOR {
                clamped = true;
                let _ = writeln!(
                    svg,
                    r#"<path class="floor" d="M{:.2},{:.2} l-4,-7 h8 z" fill="{color}"><title>{} BER 0 at {x} dB</title></path>"#,
                    sx(x),
                    sy(b),
                    escape(&s.detector)
                );
            } else {
                let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(x), sy(b));
            }
        }
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text class="legend" x="{}" y="{}">{}</text>"#,
            lx + 22.0,
            lx + 28.0,
            ly + 4.0,
            escape(&s.detector)
        );
    }
    if clamped {
        let _ = writeln!(
            svg,
            r#"<text class="floor-note" x="{}" y="{}" text-anchor="end" font-size="10">▼ zero errors, drawn at 1e-6</text>"#,
            LEFT + pw - 4.0,
            TOP + ph - 6.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn x_ticks(x0: f64, x1: f64) -> Vec<f64> {
    let span = x1 - x0;
    let step = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0]
        .into_iter()
        .find(|s| span / s <= 10.0)
        .unwrap_or(100.0);
    let mut t = (x0 / step).ceil() * step;
    let mut out = Vec::new();
    while t <= x1 + 1e-9 {
        out.push(t);
        t += step;
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(rows: &[(&str, f64, f64)]) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for (d, snr, ber) in rows {
            s.push_str(&format!("ds-cdma,gold,31,10,1000,5,{snr},{d},10,0,200000,0,{ber:e},0e0,1\n"));
        }
        s
    }

    #[test]
    fn one_detector_three_vertices() {
        let t = parse_csv(&csv(&[("rake", 0.0, 0.2), ("rake", 10.0, 0.01), ("rake", 20.0, 1e-4)])).unwrap();
        let svg = render_svg(&t);
        assert_eq!(svg.matches("<polyline").count(), 1);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split_whitespace().count(), 3);
    }

    #[test]
    fn zero_ber_is_clamped_and_marked() {
        let t = parse_csv(&csv(&[("lmmse", 10.0, 0.01), ("lmmse", 20.0, 0.0)])).unwrap();
        let svg = render_svg(&t);
        assert_eq!(svg.matches("class=\"floor\"").count(), 1);
        assert!(svg.contains("floor-note"));
        let floor_y = TOP + (HEIGHT - TOP - BOTTOM);
        assert!(svg.contains(&format!("{floor_y:.2}")));
    }

    #[test]
    fn legend_in_csv_order() {
        let t = parse_csv(&csv(&[("fb2", 0.0, 0.1), ("mf", 0.0, 0.3), ("fb2", 5.0, 0.05)])).unwrap();
        let svg = render_svg(&t);
        let legend: Vec<&str> = svg
            .split("class=\"legend\"")
            .skip(1)
            .map(|s| s.split('>').nth(1).unwrap().split('<').next().unwrap())
            .collect();
        assert_eq!(legend, ["fb2", "mf"]);
    }

    #[test]
    fn malformed_rows_report_line() {
        let bad = format!("{}ds-cdma,gold,31\n", csv(&[("mf", 0.0, 0.1)]));
        assert!(parse_csv(&bad).unwrap_err().to_string().contains("line 3"));
        let bad = csv(&[("mf", 0.0, 0.1)]).replace("1e-1", "oops");
        assert!(parse_csv(&bad).unwrap_err().to_string().contains("line 2"));
        assert!(parse_csv("a,b\n").unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn failed_points_are_skipped() {
        let t = parse_csv(&csv(&[("ff", 0.0, f64::NAN), ("ff", 10.0, 0.1)])).unwrap();
        let svg = render_svg(&t);
        let pts = svg.split("points=\"").nth(1).unwrap().split('"').next().unwrap();
        assert_eq!(pts.split_whitespace().count(), 1);
    }
}
