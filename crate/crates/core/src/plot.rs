//! Static SVG charts for Shapley summaries.
//!
//! Every chart uses an 800 x 600 canvas with a 10-unit margin on all sides.
//! Red `#ff0051` marks high feature values and positive correlation, blue
//! `#008bfb` low values and negative correlation; point colours interpolate
//! linearly between the two in RGB. A feature whose values are all equal has
//! nothing to normalise against and is drawn at the midpoint colour.
//!
//! Output is a pure function of the inputs, so identical inputs give
//! byte-identical documents.

use std::fmt::Write as _;

use thiserror::Error;

use crate::shap::{zero_crossing_threshold, GlobalImportance, ShapExplanation};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
pub const MARGIN: f64 = 10.0;
pub const HIGH_COLOR: &str = "#ff0051";
pub const LOW_COLOR: &str = "#008bfb";
/// Width reserved for feature-name labels left of the bars and swarms.
pub const LABEL_WIDTH: f64 = 170.0;
/// Height reserved for the title and the axis labels.
const TITLE_HEIGHT: f64 = 30.0;
const AXIS_HEIGHT: f64 = 30.0;
const POINT_RADIUS: f64 = 2.5;
const HIGH_RGB: [f64; 3] = [255.0, 0.0, 81.0];
const LOW_RGB: [f64; 3] = [0.0, 139.0, 251.0];
const GOLDEN_FRACTION: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Error, PartialEq)]
pub enum PlotError {
    #[error("nothing to plot")]
    Empty,
    #[error("length mismatch: {0}")]
    Length(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, PlotError>;

/// Colour for a value already normalised to `[0, 1]`.
pub fn blend(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let c: Vec<u8> = (0..3)
        .map(|i| (LOW_RGB[i] + (HIGH_RGB[i] - LOW_RGB[i]) * t).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Min-max normalisation; a constant column maps to 0.5.
pub fn normalise(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = bounds(values);
    if hi > lo {
        values.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; values.len()]
    }
}

fn bounds(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Deterministic vertical offset in `[-0.5, 0.5)` for the `i`-th point.
pub fn jitter(i: usize) -> f64 {
    ((i as f64 + 1.0) * GOLDEN_FRACTION).fract() - 0.5
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
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

fn check_finite(values: &[f64], what: &'static str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(PlotError::NonFinite(what))
    }
}

/// Linear map from a data range onto a pixel range; a degenerate data range
/// is widened by one unit each side.
#[derive(Debug, Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, from: f64, to: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        Scale { lo, hi, from, to }
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }
}

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(body, r##"<rect class="background" x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
        let _ = writeln!(
            body,
            r#"<text class="title" x="{:.3}" y="{:.3}" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            MARGIN + 16.0,
            escape(title)
        );
        Svg { body }
    }

    fn line(&mut self, class: &str, x1: f64, y1: f64, x2: f64, y2: f64, extra: &str) {
        let _ = writeln!(
            self.body,
            r##"<line class="{class}" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="#333333" stroke-width="1"{extra}/>"##
        );
    }

    fn text(&mut self, class: &str, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text class="{class}" x="{x:.3}" y="{y:.3}" text-anchor="{anchor}">{}</text>"#,
            escape(s)
        );
    }

    fn circle(&mut self, cx: f64, cy: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle class="point" cx="{cx:.3}" cy="{cy:.3}" r="{POINT_RADIUS}" fill="{fill}" fill-opacity="0.8"/>"#
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

/// Horizontal x axis along `y` with end labels.
fn x_axis(svg: &mut Svg, scale: &Scale, y: f64, label: &str) {
    svg.line("axis", scale.from, y, scale.to, y, "");
    svg.text("tick", scale.from, y + 14.0, "start", &format!("{:.3}", scale.lo));
    svg.text("tick", scale.to, y + 14.0, "end", &format!("{:.3}", scale.hi));
    svg.text("axis-label", (scale.from + scale.to) / 2.0, y + 26.0, "middle", label);
}

/// Vertical y axis along `x` with end labels.
fn y_axis(svg: &mut Svg, scale: &Scale, x: f64, label: &str) {
    svg.line("axis", x, scale.from, x, scale.to, "");
    svg.text("tick", x - 4.0, scale.from, "end", &format!("{:.3}", scale.lo));
    svg.text("tick", x - 4.0, scale.to + 10.0, "end", &format!("{:.3}", scale.hi));
    let _ = writeln!(
        svg.body,
        r#"<text class="axis-label" x="{:.3}" y="{:.3}" text-anchor="middle" transform="rotate(-90 {:.3} {:.3})">{}</text>"#,
        MARGIN + 12.0,
        (scale.from + scale.to) / 2.0,
        MARGIN + 12.0,
        (scale.from + scale.to) / 2.0,
        escape(label)
    );
}

/// Mean |phi| bars, largest on top. Bar length is proportional to the
/// importance with the largest bar spanning the full plot width.
pub fn plot_importance(importance: &GlobalImportance) -> Result<String> {
    let feats = &importance.features;
    if feats.is_empty() {
        return Err(PlotError::Empty);
    }
    let imp: Vec<f64> = feats.iter().map(|f| f.mean_abs_phi).collect();
    check_finite(&imp, "importance")?;
    let max = imp.iter().cloned().fold(0.0, f64::max);
    let x0 = MARGIN + LABEL_WIDTH;
    let full = WIDTH - MARGIN - x0;
    let top = MARGIN + TITLE_HEIGHT;
    let row = (HEIGHT - MARGIN - AXIS_HEIGHT - top) / feats.len() as f64;

    let mut svg = Svg::new("Global feature importance (mean |SHAP value|)");
    for (i, f) in feats.iter().enumerate() {
        let width = if max > 0.0 { f.mean_abs_phi / max * full } else { 0.0 };
        let y = top + i as f64 * row;
        let fill = if f.correlation >= 0.0 { HIGH_COLOR } else { LOW_COLOR };
        let _ = writeln!(
            svg.body,
            r#"<rect class="bar" data-feature="{}" data-value="{}" x="{x0:.3}" y="{:.3}" width="{width:.3}" height="{:.3}" fill="{fill}"/>"#,
            escape(&f.name),
            f.mean_abs_phi,
            y + 0.1 * row,
            0.8 * row
        );
        svg.text("label", x0 - 6.0, y + row / 2.0 + 4.0, "end", &f.name);
    }
    let scale = Scale::new(0.0, max, x0, x0 + full);
    x_axis(&mut svg, &scale, HEIGHT - MARGIN - AXIS_HEIGHT, "mean |SHAP value|");
    Ok(svg.finish())
}

/// One horizontal swarm per feature in importance order; x is the Shapley
/// value, colour the feature value normalised within its column.
pub fn plot_beeswarm(
    importance: &GlobalImportance,
    rows: &[&[f64]],
    explanations: &[ShapExplanation],
) -> Result<String> {
    if explanations.is_empty() || importance.features.is_empty() {
        return Err(PlotError::Empty);
    }
    if rows.len() != explanations.len() {
        return Err(PlotError::Length(format!(
            "{} rows for {} explanations",
            rows.len(),
            explanations.len()
        )));
    }
    let n_features = importance.features.len();
    if rows.iter().any(|r| r.len() < n_features) || explanations.iter().any(|e| e.phi.len() < n_features) {
        return Err(PlotError::Length("rows narrower than the feature list".into()));
    }
    let all_phi: Vec<f64> = explanations.iter().flat_map(|e| e.phi.iter().copied()).collect();
    check_finite(&all_phi, "shap values")?;
    let (lo, hi) = bounds(&all_phi);
    let x0 = MARGIN + LABEL_WIDTH;
    let scale = Scale::new(lo.min(0.0), hi.max(0.0), x0, WIDTH - MARGIN);
    let top = MARGIN + TITLE_HEIGHT;
    let bottom = HEIGHT - MARGIN - AXIS_HEIGHT;
    let row = (bottom - top) / n_features as f64;

    let mut svg = Svg::new("Local explanation summary");
    let zx = scale.map(0.0);
    svg.line("zero-line", zx, top, zx, bottom, r#" stroke-dasharray="4 3""#);
    for (k, f) in importance.features.iter().enumerate() {
        let centre = top + (k as f64 + 0.5) * row;
        svg.text("label", x0 - 6.0, centre + 4.0, "end", &f.name);
        let values: Vec<f64> = rows.iter().map(|r| r[f.feature]).collect();
        check_finite(&values, "feature values")?;
        let _ = writeln!(svg.body, r#"<g class="swarm" data-feature="{}">"#, escape(&f.name));
        for (i, (t, e)) in normalise(&values).into_iter().zip(explanations).enumerate() {
            svg.circle(scale.map(e.phi[f.feature]), centre + jitter(i) * 0.8 * row, &blend(t));
        }
        svg.body.push_str("</g>\n");
    }
    x_axis(&mut svg, &scale, bottom, "SHAP value (impact on model output)");
    Ok(svg.finish())
}

struct Scatter<'a> {
    title: String,
    x_label: &'a str,
    y_label: &'a str,
    x: &'a [f64],
    y: &'a [f64],
    colours: Vec<String>,
}

fn scatter_frame(s: &Scatter<'_>) -> Result<(Svg, Scale, Scale)> {
    if s.x.is_empty() {
        return Err(PlotError::Empty);
    }
    if s.x.len() != s.y.len() {
        return Err(PlotError::Length(format!("{} x values for {} y values", s.x.len(), s.y.len())));
    }
    check_finite(s.x, "x values")?;
    check_finite(s.y, "y values")?;
    let (xl, xh) = bounds(s.x);
    let (yl, yh) = bounds(s.y);
    let left = MARGIN + 60.0;
    let top = MARGIN + TITLE_HEIGHT;
    let bottom = HEIGHT - MARGIN - AXIS_HEIGHT;
    let xs = Scale::new(xl, xh, left, WIDTH - MARGIN);
    // screen y grows downwards
    let ys = Scale::new(yl.min(0.0), yh.max(0.0), bottom, top);
    let mut svg = Svg::new(&s.title);
    x_axis(&mut svg, &xs, bottom, s.x_label);
    y_axis(&mut svg, &ys, left, s.y_label);
    let zy = ys.map(0.0);
    svg.line("zero-line", xs.from, zy, xs.to, zy, r#" stroke-dasharray="4 3""#);
    Ok((svg, xs, ys))
}

fn scatter_points(svg: &mut Svg, s: &Scatter<'_>, xs: &Scale, ys: &Scale) {
    svg.body.push_str("<g class=\"points\">\n");
    for ((x, y), c) in s.x.iter().zip(s.y).zip(&s.colours) {
        svg.circle(xs.map(*x), ys.map(*y), c);
    }
    svg.body.push_str("</g>\n");
}

/// Feature value against its Shapley value, with the zero line and, when the
/// smoothed curve changes sign, a vertical marker at the crossing.
pub fn plot_dependence(feature: &str, values: &[f64], phi: &[f64], window: usize) -> Result<String> {
    let s = Scatter {
        title: format!("Dependence of {feature}"),
        x_label: feature,
        y_label: "SHAP value",
        x: values,
        y: phi,
        colours: vec![HIGH_COLOR.to_string(); values.len()],
    };
    let (mut svg, xs, ys) = scatter_frame(&s)?;
    scatter_points(&mut svg, &s, &xs, &ys);
    let points: Vec<(f64, f64)> = values.iter().copied().zip(phi.iter().copied()).collect();
    if let Some(t) = zero_crossing_threshold(&points, window) {
        let x = xs.map(t);
        let _ = writeln!(
            svg.body,
            r##"<line class="threshold" data-value="{t}" x1="{x:.3}" y1="{:.3}" x2="{x:.3}" y2="{:.3}" stroke="#000000" stroke-width="1.5"/>"##,
            ys.to,
            ys.from
        );
        svg.text("threshold-label", x + 4.0, ys.to + 12.0, "start", &format!("threshold {t:.1}"));
    }
    Ok(svg.finish())
}

/// Feature A against the A-B interaction value, coloured by feature B.
pub fn plot_interaction(
    feature_a: &str,
    feature_b: &str,
    values_a: &[f64],
    values_b: &[f64],
    interaction: &[f64],
) -> Result<String> {
    if values_b.len() != values_a.len() {
        return Err(PlotError::Length(format!(
            "{} values of {feature_a} for {} of {feature_b}",
            values_a.len(),
            values_b.len()
        )));
    }
    check_finite(values_b, "colour values")?;
    let y_label = format!("SHAP interaction value {feature_a} x {feature_b}");
    let s = Scatter {
        title: format!("Interaction of {feature_a} and {feature_b}"),
        x_label: feature_a,
        y_label: &y_label,
        x: values_a,
        y: interaction,
        colours: normalise(values_b).into_iter().map(blend).collect(),
    };
    let (mut svg, xs, ys) = scatter_frame(&s)?;
    scatter_points(&mut svg, &s, &xs, &ys);
    svg.text(
        "legend",
        WIDTH - MARGIN,
        MARGIN + TITLE_HEIGHT - 4.0,
        "end",
        &format!("colour: {feature_b} (blue low, red high)"),
    );
    Ok(svg.finish())
}
