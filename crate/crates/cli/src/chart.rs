//! Accumulated-metrics bar chart: one stacked AUC/F1/IoU bar per model and
//! OSN profile, averaged over the datasets given.

use std::fmt::Write as _;

use forgenet_core::metrics::DatasetReport;
use forgenet_core::{Error, Result};

/// Pixels per metric unit; a perfect bar is three units tall.
pub const UNIT: f64 = 100.0;
const BAR: f64 = 48.0;
const GAP: f64 = 32.0;
const LEFT: f64 = 56.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 96.0;
const COLORS: [(&str, &str); 3] = [("AUC", "#4e79a7"), ("F1", "#f28e2b"), ("IoU", "#59a14f")];

#[derive(Clone, Debug, PartialEq)]
pub struct Bar {
    pub model: String,
    pub profile: String,
    /// Mean AUC, F1 and IoU over the grouped reports.
    pub segments: [f64; 3],
}

impl Bar {
    pub fn height_units(&self) -> f64 {
        self.segments.iter().sum()
    }
}

/// Groups reports by (model, profile) in first-seen order.
pub fn bars(reports: &[DatasetReport]) -> Vec<Bar> {
    let mut groups: Vec<(String, String, Vec<[f64; 3]>)> = Vec::new();
    for r in reports {
        let key = (r.model.clone(), r.profile_label().to_string());
        let a = &r.aggregate;
        let seg = [a.auc.unwrap_or(0.0), a.f1, a.iou];
        match groups.iter_mut().find(|g| (g.0.as_str(), g.1.as_str()) == (key.0.as_str(), key.1.as_str())) {
            Some(g) => g.2.push(seg),
            None => groups.push((key.0, key.1, vec![seg])),
        }
    }
    groups
        .into_iter()
        .map(|(model, profile, segs)| {
            let n = segs.len() as f64;
            let mut mean = [0.0; 3];
            for s in &segs {
                for k in 0..3 {
                    mean[k] += s[k] / n;
                }
            }
            Bar {
                model,
                profile,
                segments: mean,
            }
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_svg(reports: &[DatasetReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Usage("chart needs at least one report".into()));
    }
    let bars = bars(reports);
    let plot_h = 3.0 * UNIT;
    let width = LEFT + bars.len() as f64 * (BAR + GAP) + GAP + 120.0;
    let height = TOP + plot_h + BOTTOM;
    let base = TOP + plot_h;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for tick in 0..=6 {
        let v = tick as f64 * 0.5;
        let y = base - v * UNIT;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.0}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/><text x="{:.0}" y="{:.2}" text-anchor="end">{v:.1}</text>"##,
            width - 120.0,
            LEFT - 6.0,
            y + 4.0
        );
    }
    for (i, b) in bars.iter().enumerate() {
        let x = LEFT + GAP + i as f64 * (BAR + GAP);
        let mut y = base;
        for (k, &(name, color)) in COLORS.iter().enumerate() {
            let h = b.segments[k].clamp(0.0, 1.0) * UNIT;
            y -= h;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{BAR:.2}" height="{h:.2}" fill="{color}"><title>{name} {:.3}</title></rect>"#,
                b.segments[k]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{:.3}</text>"#,
            x + BAR / 2.0,
            y - 4.0,
            b.height_units()
        );
        let lx = x + BAR / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="{lx:.2}" y="{:.2}" text-anchor="end" transform="rotate(-40 {lx:.2} {:.2})">{} / {}</text>"#,
            base + 14.0,
            base + 14.0,
            escape(&b.model),
            escape(&b.profile)
        );
    }
    let lx = width - 110.0;
    for (k, &(name, color)) in COLORS.iter().enumerate() {
        let ly = TOP + k as f64 * 18.0;
        let _ = writeln!(
            s,
            r#"<rect x="{lx:.0}" y="{ly:.0}" width="12" height="12" fill="{color}"/><text x="{:.0}" y="{:.0}">{name}</text>"#,
            lx + 18.0,
            ly + 10.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use forgenet_core::metrics::{Fusion, MetricsRecord};

    fn report(dataset: &str, model: &str, profile: Option<&str>, v: f64) -> DatasetReport {
        let rec = MetricsRecord {
            id: "a".into(),
            auc: Some(v),
            f1: v,
            iou: v,
            flags: vec![],
        };
        DatasetReport::from_records(dataset, model, Fusion::None, profile.map(String::from), vec![rec])
    }

    #[test]
    fn perfect_report_is_three_units() {
        let b = bars(&[report("d", "m", None, 1.0)]);
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].height_units(), 3.0);
        assert_eq!(b[0].profile, "pristine");
        let svg = render_svg(&[report("d", "m", None, 1.0)]).unwrap();
        assert!(svg.contains(&format!(r#"height="{:.2}""#, UNIT)));
        assert!(svg.contains(">3.000<"));
    }

    #[test]
    fn identical_datasets_give_identical_bars() {
        let a = bars(&[report("x", "m1", None, 0.4), report("x", "m2", None, 0.4)]);
        assert_eq!(a[0].segments, a[1].segments);
    }

    #[test]
    fn groups_by_model_and_profile() {
        let rs = [
            report("x", "m", None, 0.2),
            report("y", "m", None, 0.6),
            report("x", "m", Some("wechat-like"), 0.1),
        ];
        let b = bars(&rs);
        assert_eq!(b.len(), 2);
        assert!((b[0].segments[1] - 0.4).abs() < 1e-12);
        assert_eq!(b[1].profile, "wechat-like");
    }

    #[test]
    fn svg_is_deterministic_and_escaped() {
        let rs = [report("x", "max(a<b>,c)", None, 0.5)];
        let s = render_svg(&rs).unwrap();
        assert_eq!(s, render_svg(&rs).unwrap());
        assert!(s.starts_with("<?xml") && s.ends_with("</svg>\n"));
        assert!(s.contains("max(a&lt;b&gt;,c)"));
        assert!(render_svg(&[]).is_err());
    }
}
