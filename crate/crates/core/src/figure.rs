//! SVG picture of one Gamlen-Gaudet step: parent blocks, the chosen halves,
//! and the high-frequency cover, drawn as stacked rows over `[0, 1)`.

use std::fmt::Write;

use crate::dyadic::DyadicInterval;
use crate::error::{Error, Result};
use crate::jones::IntervalFamily;
use crate::quasi_diag::{gamlen_gaudet_children, Side};

const LEFT: f64 = 110.0;
const WIDTH: f64 = 640.0;
const ROW: f64 = 44.0;
const BAR: f64 = 24.0;
const BASELINE: f64 = 17.0;
const COLORS: [&str; 3] = ["#4c72b0", "#dd8452", "#55a868"];

/// Rows of intervals, each drawn as a labelled band.
pub fn render_rows(rows: &[(String, Vec<DyadicInterval>)]) -> String {
    let height = 20.0 + ROW * rows.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{height}" viewBox="0 0 {} {height}">"#,
        LEFT + WIDTH + 20.0,
        LEFT + WIDTH + 20.0
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    for (r, (label, intervals)) in rows.iter().enumerate() {
        let y = 10.0 + ROW * r as f64;
        let color = COLORS[r % COLORS.len()];
        let _ = writeln!(
            svg,
            r##"<text x="8" y="{}" font-family="monospace" font-size="13" fill="#222222">{label}</text>"##,
            y + BASELINE
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="#999999" stroke-width="1"/>"##,
            y + BAR,
            LEFT + WIDTH,
            y + BAR
        );
        for interval in intervals {
            let x = LEFT + WIDTH * interval.start_f64();
            let w = WIDTH * interval.measure_f64();
            let _ = writeln!(
                svg,
                r##"<rect x="{x}" y="{y}" width="{w}" height="{BAR}" fill="{color}" stroke="#ffffff" stroke-width="0.5"><title>{interval}</title></rect>"##
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

/// Three rows: `parent_blocks`, their `side` halves, and `𝓕_m`.
pub fn cover_figure(parent_blocks: &[DyadicInterval], side: Side, m: u32) -> Result<String> {
    if parent_blocks.is_empty() {
        return Err(Error::Precondition("cover figure needs at least one parent block".into()));
    }
    let cover = gamlen_gaudet_children(parent_blocks, side, m)?;
    let halves = parent_blocks
        .iter()
        .map(|b| match side {
            Side::Left => b.left(),
            Side::Right => b.right(),
        })
        .collect();
    let side_name = match side {
        Side::Left => "left",
        Side::Right => "right",
    };
    Ok(render_rows(&[
        ("parents".into(), parent_blocks.to_vec()),
        (format!("{side_name} halves"), halves),
        (format!("cover m={m}"), cover),
    ]))
}

/// The step that produced `index` in `family`; the last index by default.
/// The root index, or a one-index family, gives a single row.
pub fn family_figure(family: &IntervalFamily, index: Option<DyadicInterval>) -> Result<String> {
    let index = match index {
        Some(i) => i,
        None => *family
            .indices()
            .last()
            .ok_or_else(|| Error::Precondition("empty family".into()))?,
    };
    if !family.indices().contains(&index) {
        return Err(Error::Precondition(format!("{index} is not an index of the family")));
    }
    let blocks = family.blocks(index).to_vec();
    let parent = index.parent().filter(|p| family.indices().contains(p));
    match parent {
        None => Ok(render_rows(&[(format!("blocks {index}"), blocks)])),
        Some(parent) => {
            let m = blocks
                .first()
                .map(|k| k.n)
                .ok_or_else(|| Error::Precondition("empty cover".into()))?;
            cover_figure(family.blocks(parent), Side::of(index), m)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_row_for_a_singleton() {
        let family = IntervalFamily::identity([DyadicInterval::UNIT]);
        let svg = family_figure(&family, None).unwrap();
        assert_eq!(svg.matches("<rect x=").count(), 1);
        assert_eq!(svg.matches("<text").count(), 1);
    }

    #[test]
    fn three_rows_for_a_step() {
        let parents = [DyadicInterval::new(1, 0).unwrap(), DyadicInterval::new(1, 1).unwrap()];
        let svg = cover_figure(&parents, Side::Left, 3).unwrap();
        assert_eq!(svg.matches("<text").count(), 3);
        assert_eq!(svg.matches("<rect x=").count(), 2 + 2 + 4);
        assert!(cover_figure(&[], Side::Left, 3).is_err());
    }
}
