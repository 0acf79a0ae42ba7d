//! Bare-bones SVG rendering of an overview: one box per cluster, one cell
//! per simplified column, merged cells hatched. No styling beyond that.

use std::fmt::Write as _;

use seqlod_core::Overview;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 600.0;
const MIN_HEIGHT: f64 = 6.0;
const GAP: f64 = 4.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render(overview: &Overview) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let usable = HEIGHT - GAP * overview.clusters.len().saturating_sub(1) as f64;
    let widest = overview
        .clusters
        .iter()
        .map(|c| c.column_origin.len())
        .max()
        .unwrap_or(1)
        .max(1);
    let cell_w = WIDTH / widest as f64;
    let mut y = 0.0;
    for c in &overview.clusters {
        let h = (c.record_share * usable).max(MIN_HEIGHT);
        let dash = if c.small_cluster { r#" stroke-dasharray="2,2""# } else { "" };
        let _ = writeln!(
            out,
            r#"  <g class="cluster" data-node="{}" data-records="{}">"#,
            c.node_id, c.record_count
        );
        let _ = writeln!(
            out,
            r#"    <rect x="0" y="{y:.2}" width="{:.2}" height="{h:.2}" fill="none" stroke="black"{dash}/>"#,
            cell_w * c.column_origin.len() as f64
        );
        let row_h = h / c.rows.len().max(1) as f64;
        for (r, row) in c.rows.iter().enumerate() {
            for (j, cell) in row.cells.iter().enumerate() {
                if cell.events.is_empty() {
                    continue;
                }
                let label = cell
                    .events
                    .iter()
                    .map(|e| overview.event_types.get(e.index()).map_or("?", String::as_str))
                    .collect::<Vec<_>>()
                    .join(" ");
                let fill = if cell.merged { "#ddd" } else { "#9cf" };
                let _ = writeln!(
                    out,
                    r#"    <rect class="cell" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"><title>{}</title></rect>"#,
                    j as f64 * cell_w,
                    y + r as f64 * row_h,
                    cell_w,
                    row_h,
                    escape(&label)
                );
            }
        }
        let _ = writeln!(out, "  </g>");
        y += h + GAP;
    }
    out.push_str("</svg>\n");
    out
}
