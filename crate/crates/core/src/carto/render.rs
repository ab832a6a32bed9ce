use std::fmt::Write as _;

use super::{CartoError, LlmMap};

const LABEL_WIDTH: usize = 240;
const CELL: usize = 16;
const ROW_HEIGHT: usize = 22;
const TOP: usize = 30;
const AXIS_HEIGHT: usize = 34;

fn bar_colour(analysis: &str) -> &'static str {
    match analysis {
        "umap" => "#4c72b0",
        "saliency" => "#dd8452",
        "lesioning" => "#55a868",
        _ => "#c44e52",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg(map: &LlmMap) -> String {
    let n_cols = map.n_layers + 1;
    let n_rows: usize = map.rows.values().map(Vec::len).sum();
    let width = LABEL_WIDTH + n_cols * CELL + 20;
    let height = TOP + n_rows * ROW_HEIGHT + AXIS_HEIGHT;
    let axis_y = TOP + n_rows * ROW_HEIGHT;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<text x="8" y="18" font-size="13">{}</text>"#,
        escape(&map.model_name)
    );

    let mut y = TOP;
    for (concept, rows) in &map.rows {
        for row in rows {
            let label = match &row.label_key {
                Some(k) => format!("{concept} / {} ({k})", row.analysis.as_str()),
                None => format!("{concept} / {}", row.analysis.as_str()),
            };
            let _ = writeln!(out, r#"<text x="8" y="{}">{}</text>"#, y + 15, escape(&label));
            let _ = writeln!(
                out,
                r##"<rect x="{LABEL_WIDTH}" y="{}" width="{}" height="{}" fill="#f2f2f2"/>"##,
                y + 3,
                n_cols * CELL,
                ROW_HEIGHT - 6
            );
            for iv in &row.intervals {
                let _ = writeln!(
                    out,
                    r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"><title>{}-{} strength {:.6}</title></rect>"#,
                    LABEL_WIDTH + iv.start * CELL,
                    y + 3,
                    (iv.end - iv.start + 1) * CELL,
                    ROW_HEIGHT - 6,
                    bar_colour(row.analysis.as_str()),
                    iv.start,
                    iv.end,
                    iv.strength
                );
            }
            y += ROW_HEIGHT;
        }
    }

    let _ = writeln!(
        out,
        r#"<line x1="{LABEL_WIDTH}" y1="{axis_y}" x2="{}" y2="{axis_y}" stroke="black"/>"#,
        LABEL_WIDTH + n_cols * CELL
    );
    let tick_every = if n_cols > 40 { 10 } else { 5 };
    for layer in (0..n_cols).step_by(tick_every) {
        let x = LABEL_WIDTH + layer * CELL + CELL / 2;
        let _ = writeln!(
            out,
            r#"<line x1="{x}" y1="{axis_y}" x2="{x}" y2="{}" stroke="black"/>"#,
            axis_y + 4
        );
        let _ = writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="middle">{layer}</text>"#,
            axis_y + 16
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">layer</text>"#,
        LABEL_WIDTH + n_cols * CELL / 2,
        axis_y + 30
    );
    out.push_str("</svg>\n");
    out
}

/// Renders `map` as `"svg"` or `"json"`. Output is byte-identical for
/// identical maps.
pub fn render_map(map: &LlmMap, format: &str) -> Result<String, CartoError> {
    match format {
        "svg" => Ok(svg(map)),
        "json" => {
            let mut s = serde_json::to_string_pretty(map).expect("map serializes");
            s.push('\n');
            Ok(s)
        }
        other => Err(CartoError::UnsupportedFormat(other.to_string())),
    }
}
