//! Hand-rolled SVG rendering of datasets and decision boundaries.
//!
//! The model's prediction is evaluated on a 200x200 grid over the padded
//! data bounding box; same-class cells merge into horizontal runs so the
//! region shading stays a few hundred rectangles, and cells whose class
//! differs from a right or lower neighbor are overdrawn as the boundary.
//! Output is deterministic except for one leading timestamp comment,
//! which the caller can suppress.

use std::fmt::Write as _;

use mkelab_core::mke::TrainedModel;

use crate::csvio::{DatasetRow, SplitTag};
use crate::error::{AppError, AppResult};

/// Grid resolution per axis for the decision-boundary raster.
pub const GRID: usize = 200;

const CANVAS_W: f64 = 640.0;
const CANVAS_H: f64 = 680.0;
const PLOT_X: f64 = 20.0;
const PLOT_Y: f64 = 60.0;
const PLOT_SIZE: f64 = 600.0;

const POINT_FILL: [&str; 2] = ["#3b6fba", "#c5504b"];
const REGION_FILL: [&str; 2] = ["#dce6f5", "#f6dedc"];
const BOUNDARY_FILL: &str = "#3a3a3a";

/// Everything one SVG needs. `timestamp: None` omits the comment.
pub struct PlotInput<'a> {
    pub rows: &'a [DatasetRow],
    pub model: Option<&'a TrainedModel>,
    pub test_accuracy: Option<f64>,
    pub title: &'a str,
    pub timestamp: Option<String>,
}

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render(input: &PlotInput<'_>) -> AppResult<String> {
    if input.rows.is_empty() {
        return Err(AppError::Config("plot needs at least one sample".into()));
    }
    let (x0, x1) = padded_range(input.rows.iter().map(|r| r.x));
    let (y0, y1) = padded_range(input.rows.iter().map(|r| r.y));
    let px = |x: f64| PLOT_X + (x - x0) / (x1 - x0) * PLOT_SIZE;
    let py = |y: f64| PLOT_Y + PLOT_SIZE - (y - y0) / (y1 - y0) * PLOT_SIZE;

    let mut svg = String::new();
    if let Some(ts) = &input.timestamp {
        let _ = writeln!(svg, "<!-- generated {ts} -->");
    }
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {CANVAS_W} {CANVAS_H}\" \
         font-family=\"sans-serif\">"
    );
    let _ = writeln!(
        svg,
        "<rect x=\"0\" y=\"0\" width=\"{CANVAS_W}\" height=\"{CANVAS_H}\" fill=\"#ffffff\"/>"
    );

    if let Some(model) = input.model {
        render_regions(&mut svg, model, x0, x1, y0, y1)?;
    }
    let _ = writeln!(
        svg,
        "<rect x=\"{PLOT_X}\" y=\"{PLOT_Y}\" width=\"{PLOT_SIZE}\" height=\"{PLOT_SIZE}\" \
         fill=\"none\" stroke=\"#888888\" stroke-width=\"1\"/>"
    );

    // Unlabeled underneath, then test, labeled on top.
    for pass in [SplitTag::Unlabeled, SplitTag::Test, SplitTag::Labeled] {
        for r in input.rows.iter().filter(|r| r.split == pass) {
            let fill = POINT_FILL[r.label.min(1)];
            let (cx, cy) = (px(r.x), py(r.y));
            match pass {
                SplitTag::Unlabeled => {
                    let _ = writeln!(
                        svg,
                        "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"2.5\" fill=\"{fill}\" \
                         fill-opacity=\"0.45\"/>"
                    );
                }
                SplitTag::Test => {
                    let _ = writeln!(
                        svg,
                        "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"3.5\" fill=\"{fill}\" \
                         stroke=\"#ffffff\" stroke-width=\"1\"/>"
                    );
                }
                SplitTag::Labeled => {
                    let _ = writeln!(
                        svg,
                        "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"5\" fill=\"{fill}\" \
                         stroke=\"#000000\" stroke-width=\"1.2\"/>"
                    );
                }
            }
        }
    }

    let _ = writeln!(
        svg,
        "<text x=\"{PLOT_X}\" y=\"34\" font-size=\"18\" fill=\"#222222\">{}</text>",
        esc(input.title)
    );
    let _ = writeln!(
        svg,
        "<text x=\"{PLOT_X}\" y=\"52\" font-size=\"12\" fill=\"#555555\">class 0 blue, \
         class 1 red; large ring labeled, faint unlabeled, white-edged test</text>"
    );
    if let Some(acc) = input.test_accuracy {
        let _ = writeln!(
            svg,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"170\" height=\"26\" fill=\"#ffffff\" \
             fill-opacity=\"0.85\" stroke=\"#888888\"/>",
            PLOT_X + 8.0,
            PLOT_Y + 8.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"14\" fill=\"#222222\">test accuracy \
             {acc:.3}</text>",
            PLOT_X + 16.0,
            PLOT_Y + 26.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Data range padded by 10% per side; degenerate spans widen to a unit.
fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-6);
    (lo - 0.1 * span, hi + 0.1 * span)
}

/// Shades predicted-class regions and overdraws boundary cells.
fn render_regions(
    svg: &mut String,
    model: &TrainedModel,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
) -> AppResult<()> {
    let dx = (x1 - x0) / GRID as f64;
    let dy = (y1 - y0) / GRID as f64;
    let mut classes = vec![0u8; GRID * GRID];
    for iy in 0..GRID {
        let cy = y0 + (iy as f64 + 0.5) * dy;
        for ix in 0..GRID {
            let cx = x0 + (ix as f64 + 0.5) * dx;
            let class = model
                .predict([cx, cy])
                .map_err(|e| AppError::Runtime(format!("grid prediction failed: {e}")))?;
            classes[iy * GRID + ix] = class.min(1) as u8;
        }
    }

    let cell = PLOT_SIZE / GRID as f64;
    // Rows are rasterized top-down: grid row iy covers data-space
    // y0 + iy*dy, which sits at pixel row (GRID-1-iy) from the top.
    let cell_px = |ix: usize, iy: usize| -> (f64, f64) {
        (
            PLOT_X + ix as f64 * cell,
            PLOT_Y + (GRID - 1 - iy) as f64 * cell,
        )
    };
    let emit_runs = |svg: &mut String, keep: &dyn Fn(usize, usize) -> Option<&'static str>| {
        for iy in 0..GRID {
            let mut ix = 0;
            while ix < GRID {
                let Some(fill) = keep(ix, iy) else {
                    ix += 1;
                    continue;
                };
                let start = ix;
                while ix < GRID && keep(ix, iy) == Some(fill) {
                    ix += 1;
                }
                let (x, y) = cell_px(start, iy);
                // A hair of overlap hides antialiasing seams between runs.
                let _ = writeln!(
                    svg,
                    "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                     fill=\"{fill}\"/>",
                    (ix - start) as f64 * cell + 0.05,
                    cell + 0.05,
                );
            }
        }
    };

    emit_runs(svg, &|ix, iy| {
        Some(REGION_FILL[classes[iy * GRID + ix] as usize])
    });
    emit_runs(svg, &|ix, iy| {
        let c = classes[iy * GRID + ix];
        let right = ix + 1 < GRID && classes[iy * GRID + ix + 1] != c;
        let up = iy + 1 < GRID && classes[(iy + 1) * GRID + ix] != c;
        (right || up).then_some(BOUNDARY_FILL)
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mkelab_core::net::{Activation, Mlp};
    use mkelab_core::synth::Modality;

    fn rows() -> Vec<DatasetRow> {
        vec![
            DatasetRow {
                x: 0.0,
                y: 1.0,
                label: 0,
                split: SplitTag::Labeled,
            },
            DatasetRow {
                x: 1.0,
                y: -0.5,
                label: 1,
                split: SplitTag::Test,
            },
            DatasetRow {
                x: 0.5,
                y: 0.2,
                label: 0,
                split: SplitTag::Unlabeled,
            },
        ]
    }

    /// Logits w·[x,y] + b: weights chosen per test.
    fn linear_model(w: [f64; 4], b: [f64; 2]) -> TrainedModel {
        let mlp = Mlp::from_parts(
            vec![2, 2],
            Activation::Tanh,
            vec![w.to_vec()],
            vec![b.to_vec()],
            0,
        )
        .unwrap();
        TrainedModel::new(mlp, Modality::Both, Vec::new()).unwrap()
    }

    #[test]
    fn scatter_without_model_has_no_region_shading() {
        let svg = render(&PlotInput {
            rows: &rows(),
            model: None,
            test_accuracy: None,
            title: "data",
            timestamp: None,
        })
        .unwrap();
        assert!(svg.contains("<svg"));
        assert!(!svg.contains(REGION_FILL[0]));
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn constant_classifier_fills_a_single_region_without_boundary() {
        // Zero weights, biased toward class 1: every cell predicts 1.
        let model = linear_model([0.0; 4], [0.0, 1.0]);
        let svg = render(&PlotInput {
            rows: &rows(),
            model: Some(&model),
            test_accuracy: Some(0.5),
            title: "constant",
            timestamp: None,
        })
        .unwrap();
        assert!(!svg.contains(REGION_FILL[0]), "no class-0 region expected");
        assert!(svg.contains(REGION_FILL[1]));
        assert!(!svg.contains(BOUNDARY_FILL), "no boundary cells expected");
        assert!(svg.contains("test accuracy 0.500"));
    }

    #[test]
    fn split_classifier_draws_both_regions_and_a_boundary() {
        // Class depends on the sign of x: logit0 = -x, logit1 = x.
        let model = linear_model([-1.0, 1.0, 0.0, 0.0], [0.0, 0.0]);
        let svg = render(&PlotInput {
            rows: &rows(),
            model: Some(&model),
            test_accuracy: None,
            title: "split",
            timestamp: None,
        })
        .unwrap();
        assert!(svg.contains(REGION_FILL[0]));
        assert!(svg.contains(REGION_FILL[1]));
        assert!(svg.contains(BOUNDARY_FILL));
    }

    #[test]
    fn timestamp_comment_is_the_only_nondeterminism() {
        let rows = rows();
        let input = PlotInput {
            rows: &rows,
            model: None,
            test_accuracy: None,
            title: "t",
            timestamp: None,
        };
        let a = render(&input).unwrap();
        let b = render(&input).unwrap();
        assert_eq!(a, b);
        let with_ts = render(&PlotInput {
            timestamp: Some("2020-01-01T00:00:00Z".into()),
            ..input
        })
        .unwrap();
        assert!(with_ts.starts_with("<!-- generated 2020-01-01T00:00:00Z -->"));
        assert_eq!(
            with_ts.lines().skip(1).collect::<Vec<_>>().join("\n"),
            a.trim_end()
        );
    }
}
