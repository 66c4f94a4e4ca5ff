//! CSV tables and minimal SVG bar charts.

use super::sobol::SobolIndices;

const ROW_H: f64 = 18.0;
const LABEL_W: f64 = 180.0;
const BAR_W: f64 = 360.0;
const PALETTE: [&str; 4] = ["#3b6ea5", "#d9822b", "#5a9e5a", "#a33b3b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn sobol_csv(names: &[String], s: &SobolIndices) -> String {
    let mut out = String::from("feature,s1,s1_lo,s1_hi,st,st_lo,st_hi\n");
    for (i, n) in names.iter().enumerate() {
        out.push_str(&format!(
            "{n},{},{},{},{},{},{}\n",
            s.s1[i], s.s1_ci_low[i], s.s1_ci_high[i], s.st[i], s.st_ci_low[i], s.st_ci_high[i]
        ));
    }
    out
}

/// Horizontal bars sorted by value, largest on top.
pub fn bar_chart_svg(title: &str, labels: &[String], values: &[f64]) -> String {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let labels: Vec<String> = idx.iter().map(|&i| labels[i].clone()).collect();
    let values: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
    grouped_bar_chart_svg(title, &labels, &[("", values)])
}

/// Horizontal grouped bars: one group per label, one bar per series.
/// Negative values are drawn at zero length.
pub fn grouped_bar_chart_svg(title: &str, labels: &[String], series: &[(&str, Vec<f64>)]) -> String {
    let k = series.len().max(1);
    let group_h = ROW_H * k as f64 + 6.0;
    let top = 40.0;
    let height = top + group_h * labels.len() as f64 + 20.0 * k as f64 + 10.0;
    let width = LABEL_W + BAR_W + 90.0;
    let max = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    svg.push_str(&format!("<text x=\"10\" y=\"22\" font-size=\"14\">{}</text>\n", escape(title)));
    for (g, label) in labels.iter().enumerate() {
        let y0 = top + g as f64 * group_h;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            LABEL_W - 8.0,
            y0 + group_h / 2.0,
            escape(label)
        ));
        for (s, (_, vals)) in series.iter().enumerate() {
            let v = vals[g];
            let w = (v.max(0.0) / max) * BAR_W;
            let y = y0 + s as f64 * ROW_H;
            svg.push_str(&format!(
                "<rect x=\"{LABEL_W}\" y=\"{y:.1}\" width=\"{w:.2}\" height=\"{:.1}\" fill=\"{}\"/>\n",
                ROW_H - 4.0,
                PALETTE[s % PALETTE.len()]
            ));
            svg.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.1}\">{v:.3}</text>\n",
                LABEL_W + w + 4.0,
                y + ROW_H - 6.0
            ));
        }
    }
    let legend_y = top + group_h * labels.len() as f64 + 10.0;
    for (s, (name, _)) in series.iter().enumerate().filter(|(_, (n, _))| !n.is_empty()) {
        let y = legend_y + s as f64 * 20.0;
        svg.push_str(&format!(
            "<rect x=\"{LABEL_W}\" y=\"{y:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/><text x=\"{}\" y=\"{:.1}\">{}</text>\n",
            PALETTE[s % PALETTE.len()],
            LABEL_W + 18.0,
            y + 10.0,
            escape(name)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bar_chart_sorted_and_escaped() {
        let labels = vec!["lulc=a&b".to_string(), "precip".to_string()];
        let svg = bar_chart_svg("mean |SHAP|", &labels, &[0.1, 2.0]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("lulc=a&amp;b"));
        assert!(svg.find("precip").unwrap() < svg.find("lulc").unwrap());
        assert_eq!(svg.matches("<rect").count(), 2);
    }
}
