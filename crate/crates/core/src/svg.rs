//! Minimal standalone SVG charts: line plots of series and 2-D scatters.

use std::fmt::Write;

use crate::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 40.0;
const LEGEND_W: f64 = 160.0;

const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

fn colour(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Highlight {
    pub series: usize,
    pub start: usize,
    pub len: usize,
}

/// Optional decorations: a colour group per series (e.g. its cluster) and
/// highlighted windows (e.g. motif occurrences).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Annotations {
    pub groups: Option<Vec<usize>>,
    pub highlights: Vec<Highlight>,
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(out: &mut String, title: &str) {
    let total_w = WIDTH + LEGEND_W;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{HEIGHT}" viewBox="0 0 {total_w} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{total_w}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        WIDTH - 2.0 * MARGIN,
        HEIGHT - 2.0 * MARGIN
    );
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    let x = WIDTH + 4.0;
    for (i, (label, col)) in entries.iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        let _ = writeln!(out, r#"<rect x="{x}" y="{:.2}" width="10" height="10" fill="{col}"/>"#, y);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{}</text>"#,
            x + 14.0,
            y + 9.0,
            escape(label)
        );
    }
}

/// One polyline per series on a shared scale, with a legend.
pub fn render_series_svg(title: &str, series: &[(String, Vec<f64>)], ann: &Annotations) -> Result<String> {
    if series.is_empty() || series.iter().all(|(_, v)| v.is_empty()) {
        return Err(Error::Input("no series to plot".into()));
    }
    if let Some(g) = &ann.groups {
        if g.len() != series.len() {
            return Err(Error::Shape(format!("{} groups for {} series", g.len(), series.len())));
        }
    }
    let len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1);
    let (lo, hi) = range(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let pw = WIDTH - 2.0 * MARGIN;
    let ph = HEIGHT - 2.0 * MARGIN;
    let px = |t: usize| MARGIN + if len > 1 { pw * t as f64 / (len - 1) as f64 } else { pw / 2.0 };
    let py = |v: f64| MARGIN + ph * (1.0 - (v - lo) / (hi - lo));
    let col_of = |i: usize| colour(ann.groups.as_ref().map_or(i, |g| g[i]));

    let mut out = String::new();
    header(&mut out, title);
    for (i, (label, vals)) in series.iter().enumerate() {
        let pts: Vec<String> =
            vals.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(t, v)| format!("{:.2},{:.2}", px(t), py(*v))).collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"><title>{}</title></polyline>"#,
            col_of(i),
            pts.join(" "),
            escape(label)
        );
    }
    for h in &ann.highlights {
        let Some((_, vals)) = series.get(h.series) else {
            return Err(Error::Range(format!("highlight refers to series {}", h.series)));
        };
        let end = (h.start + h.len).min(vals.len());
        if h.start >= end {
            continue;
        }
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{MARGIN}" width="{:.2}" height="{ph}" fill="#ffd700" fill-opacity="0.25"/>"##,
            px(h.start),
            (px(end - 1) - px(h.start)).max(2.0)
        );
        let pts: Vec<String> = (h.start..end).map(|t| format!("{:.2},{:.2}", px(t), py(vals[t]))).collect();
        let _ = writeln!(out, r##"<polyline fill="none" stroke="#000" stroke-width="3" points="{}"/>"##, pts.join(" "));
    }
    let entries: Vec<(String, &str)> = match &ann.groups {
        // Grouped plots get one legend entry per group.
        Some(g) => {
            let mut ids: Vec<usize> = g.clone();
            ids.sort_unstable();
            ids.dedup();
            ids.into_iter().map(|c| (format!("cluster {}", c + 1), colour(c))).collect()
        }
        None => series.iter().enumerate().map(|(i, (l, _))| (l.clone(), colour(i))).collect(),
    };
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Labelled 2-D scatter, coloured by group.
pub fn render_scatter_svg(title: &str, labels: &[String], points: &[[f64; 2]], groups: &[usize]) -> Result<String> {
    if points.is_empty() {
        return Err(Error::Input("no points to plot".into()));
    }
    if labels.len() != points.len() || groups.len() != points.len() {
        return Err(Error::Shape("labels, points and groups differ in length".into()));
    }
    let (xlo, xhi) = range(points.iter().map(|p| p[0]));
    let (ylo, yhi) = range(points.iter().map(|p| p[1]));
    let pw = WIDTH - 2.0 * MARGIN - 20.0;
    let ph = HEIGHT - 2.0 * MARGIN - 20.0;
    let mut out = String::new();
    header(&mut out, title);
    for ((label, p), &g) in labels.iter().zip(points).zip(groups) {
        let x = MARGIN + 10.0 + pw * (p[0] - xlo) / (xhi - xlo);
        let y = MARGIN + 10.0 + ph * (1.0 - (p[1] - ylo) / (yhi - ylo));
        let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{}"><title>{}</title></circle>"#, colour(g), escape(label));
    }
    let mut ids = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let entries: Vec<(String, &str)> = ids.into_iter().map(|c| (format!("cluster {}", c + 1), colour(c))).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(svg: &str) -> roxmltree::Document<'_> {
        roxmltree::Document::parse(svg).expect("well-formed XML")
    }

    #[test]
    fn single_series_single_polyline() {
        let svg = render_series_svg("t", &[("a".into(), vec![1.0, 3.0, 2.0])], &Annotations::default()).unwrap();
        let doc = parse(&svg);
        let lines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].attribute("points").unwrap().split_whitespace().count(), 3);
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }

    #[test]
    fn escapes_labels_and_is_deterministic() {
        let series = vec![("A&B <co>".to_owned(), vec![0.0, 1.0]), ("\"q\"".to_owned(), vec![2.0, 2.0])];
        let ann = Annotations { groups: Some(vec![1, 0]), highlights: vec![Highlight { series: 0, start: 0, len: 2 }] };
        let a = render_series_svg("x < y", &series, &ann).unwrap();
        let b = render_series_svg("x < y", &series, &ann).unwrap();
        assert_eq!(a, b);
        let doc = parse(&a);
        assert!(doc.descendants().any(|n| n.text() == Some("A&B <co>")));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(render_series_svg("t", &[], &Annotations::default()), Err(Error::Input(_))));
        assert!(render_scatter_svg("t", &[], &[], &[]).is_err());
    }

    #[test]
    fn scatter_is_well_formed() {
        let svg = render_scatter_svg("e", &["p".into(), "q".into()], &[[0.0, 1.0], [2.0, -1.0]], &[0, 1]).unwrap();
        let doc = parse(&svg);
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("circle")).count(), 2);
    }
}
