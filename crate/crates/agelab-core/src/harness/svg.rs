//! Impact-matrix heatmaps as standalone SVG text.
//!
//! No plotting dependency: the renderer emits `<rect>` cells on a
//! diverging red/blue scale centered at zero over the fixed domain
//! [-1, 1], labeled rows and columns, and a legend bar. Output is a pure
//! function of the matrix and labels, so renders are byte-reproducible.

use crate::concepts::ConceptSpace;
use crate::error::Result;
use crate::evaluation::ImpactMatrix;

const CELL: f64 = 22.0;
const LEFT: f64 = 110.0;
const TOP: f64 = 110.0;
const LEGEND_H: f64 = 46.0;

/// Positive impact fades white -> red, negative white -> blue.
fn cell_color(value: f64) -> String {
    let v = value.clamp(-1.0, 1.0);
    let (r, g, b) = if v >= 0.0 {
        let t = v;
        (
            255.0,
            255.0 - t * (255.0 - 30.0),
            255.0 - t * (255.0 - 30.0),
        )
    } else {
        let t = -v;
        (
            255.0 - t * (255.0 - 30.0),
            255.0 - t * (255.0 - 30.0),
            255.0,
        )
    };
    format!("rgb({},{},{})", r.round() as u8, g.round() as u8, b.round() as u8)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders a heatmap of the matrix with concept-name labels.
///
/// `row_labels`/`col_labels` default to the concept names from `space`;
/// `title` lands above the grid. Cells print their value on hover via
/// `<title>` elements.
pub fn heatmap_svg(matrix: &ImpactMatrix, space: &ConceptSpace, title: &str) -> Result<String> {
    let rows = matrix.rows.len();
    let cols = matrix.cols.len();
    let name = |id| {
        space
            .record(id)
            .map(|r| r.name.clone())
            .unwrap_or_else(|_| format!("#{id}"))
    };
    let width = LEFT + cols as f64 * CELL + 30.0;
    let height = TOP + rows as f64 * CELL + LEGEND_H + 30.0;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"10\">\n"
    ));
    out.push_str(&format!(
        "  <text x=\"{LEFT}\" y=\"18\" font-size=\"13\">{}</text>\n",
        esc(title)
    ));
    out.push_str(&format!(
        "  <text x=\"{LEFT}\" y=\"34\" fill=\"#555\">metric {} | rows: erased concept | \
         columns: queried concept</text>\n",
        matrix.metric
    ));

    for (ci, &cj) in matrix.cols.iter().enumerate() {
        let x = LEFT + ci as f64 * CELL + CELL / 2.0;
        out.push_str(&format!(
            "  <text x=\"{x}\" y=\"{}\" text-anchor=\"start\" \
             transform=\"rotate(-60 {x} {})\">{}</text>\n",
            TOP - 6.0,
            TOP - 6.0,
            esc(&name(cj))
        ));
    }
    for (ri, &ce) in matrix.rows.iter().enumerate() {
        let y = TOP + ri as f64 * CELL + CELL * 0.7;
        out.push_str(&format!(
            "  <text x=\"{}\" y=\"{y}\" text-anchor=\"end\">{}</text>\n",
            LEFT - 6.0,
            esc(&name(ce))
        ));
    }

    for ri in 0..rows {
        for ci in 0..cols {
            let v = matrix.value(ri, ci);
            let x = LEFT + ci as f64 * CELL;
            let y = TOP + ri as f64 * CELL;
            out.push_str(&format!(
                "  <rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" \
                 fill=\"{}\" stroke=\"#ccc\" stroke-width=\"0.5\">\
                 <title>{} erased, {} queried: {v}</title></rect>\n",
                cell_color(v),
                esc(&name(matrix.rows[ri])),
                esc(&name(matrix.cols[ci])),
            ));
        }
    }

    // Legend: a discrete gradient bar over [-1, 1].
    let ly = TOP + rows as f64 * CELL + 22.0;
    let steps = 41;
    let lw = 160.0;
    for i in 0..steps {
        let v = -1.0 + 2.0 * i as f64 / (steps - 1) as f64;
        let x = LEFT + i as f64 * lw / steps as f64;
        out.push_str(&format!(
            "  <rect x=\"{x}\" y=\"{ly}\" width=\"{}\" height=\"12\" fill=\"{}\"/>\n",
            lw / steps as f64 + 0.5,
            cell_color(v)
        ));
    }
    for (t, label) in [(0.0, "-1"), (0.5, "0"), (1.0, "+1")] {
        let x = LEFT + t * lw;
        out.push_str(&format!(
            "  <text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{label}</text>\n",
            ly + 24.0
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::concepts::{build_concept_space, SpaceSpec};
    use crate::evaluation::{CellMeta, MetricKind};

    fn matrix(space: &ConceptSpace, values: Vec<f64>) -> ImpactMatrix {
        let anchors = space.anchors();
        let rows = vec![anchors[0], anchors[1]];
        let cols = vec![anchors[0], anchors[1]];
        ImpactMatrix {
            metric: MetricKind::Ds(1),
            rows,
            cols,
            cells: vec![CellMeta { n: 1, seed: 0 }; values.len()],
            values,
        }
    }

    #[test]
    fn zero_matrix_renders_a_uniform_neutral_grid() {
        let space = build_concept_space(&SpaceSpec::default(), 42).unwrap();
        let m = matrix(&space, vec![0.0; 4]);
        let svg = heatmap_svg(&m, &space, "zero").unwrap();
        assert_eq!(svg.matches("fill=\"rgb(255,255,255)\"").count(), 4 + 1,
            "four cells plus the legend midpoint are neutral white");
    }

    #[test]
    fn single_saturated_cell() {
        let space = build_concept_space(&SpaceSpec::default(), 42).unwrap();
        let m = matrix(&space, vec![0.0, 1.0, 0.0, 0.0]);
        let svg = heatmap_svg(&m, &space, "one hot").unwrap();
        let saturated = "fill=\"rgb(255,30,30)\"";
        // one grid cell plus the legend end cap
        assert_eq!(svg.matches(saturated).count(), 2, "{svg}");
    }

    #[test]
    fn render_is_deterministic() {
        let space = build_concept_space(&SpaceSpec::default(), 42).unwrap();
        let m = matrix(&space, vec![0.25, -0.5, 0.75, 0.0]);
        let a = heatmap_svg(&m, &space, "t").unwrap();
        let b = heatmap_svg(&m, &space, "t").unwrap();
        assert_eq!(a, b);
    }
}
