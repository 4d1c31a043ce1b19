//! Epipolar-line overlays: clipped Bresenham lines and 3x3 point markers.

use crate::epipolar::{epipolar_line, parse_f64, serr_min, Correspondence, EpipolarLine, FundamentalMatrix, ImagePoint, Side, TimeDirection};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::pnm::{GrayImage, RgbImage};
use crate::textio::TextReader;

pub const LINE_COLOR: [u8; 3] = [0, 255, 0];
pub const POINT_COLOR: [u8; 3] = [255, 0, 0];
pub const PARTNER_COLOR: [u8; 3] = [0, 128, 255];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpilineItem {
    pub point: ImagePoint,
    pub side: Side,
    /// Optional second endpoint, drawn as its own marker.
    pub partner: Option<ImagePoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RenderStats {
    pub lines: usize,
    /// Points at an epipole, whose line is undefined.
    pub degenerate: usize,
    /// Lines that miss the canvas.
    pub off_canvas: usize,
}

/// One item per correspondence: the line through its start point on the
/// side its better time direction selects, so the line passes through the
/// other endpoint when the smear is consistent with `f`.
pub fn items_from_correspondences(cs: &[Correspondence], f: &FundamentalMatrix) -> Vec<EpilineItem> {
    cs.iter()
        .map(|c| {
            let side = match serr_min(c, f).1 {
                TimeDirection::StartToEnd => Side::Left,
                TimeDirection::EndToStart => Side::Right,
            };
            EpilineItem {
                point: c.start(),
                side,
                partner: Some(c.end()),
            }
        })
        .collect()
}

/// Plain list of `x y` lines; `#` comments and blank lines are ignored.
pub fn parse_point_list(text: &str) -> Result<Vec<ImagePoint>> {
    let mut reader = TextReader::new(text);
    let mut out = Vec::new();
    while let Some((no, toks)) = reader.next_tokens() {
        if toks.len() != 2 {
            return Err(Error::parse(no, format!("expected 2 values, found {}", toks.len())));
        }
        out.push(ImagePoint::new(parse_f64(toks[0], no)?, parse_f64(toks[1], no)?));
    }
    Ok(out)
}

/// Segment of `line` inside `[0, w] x [0, h]`, or `None` if it misses.
pub fn clip_line(line: &EpipolarLine, w: f64, h: f64) -> Option<(ImagePoint, ImagePoint)> {
    let EpipolarLine { a, b, c } = *line;
    let mut pts: Vec<ImagePoint> = Vec::with_capacity(4);
    if b != 0.0 {
        for x in [0.0, w] {
            let y = -(a * x + c) / b;
            if (0.0..=h).contains(&y) {
                pts.push(ImagePoint::new(x, y));
            }
        }
    }
    if a != 0.0 {
        for y in [0.0, h] {
            let x = -(b * y + c) / a;
            if (0.0..=w).contains(&x) {
                pts.push(ImagePoint::new(x, y));
            }
        }
    }
    let mut best: Option<(f64, ImagePoint, ImagePoint)> = None;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let d = (pts[i].x - pts[j].x).hypot(pts[i].y - pts[j].y);
            if best.is_none_or(|(bd, _, _)| d > bd) {
                best = Some((d, pts[i], pts[j]));
            }
        }
    }
    match (best, pts.first()) {
        (Some((_, p, q)), _) => Some((p, q)),
        // Touches a corner only.
        (None, Some(&p)) => Some((p, p)),
        (None, None) => None,
    }
}

fn to_cell(v: f64, n: usize) -> i64 {
    (v.floor() as i64).clamp(0, n as i64 - 1)
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        *img.get_mut(x as usize, y as usize) = color;
    }
}

/// Integer Bresenham between two cells, inclusive.
pub fn draw_segment(img: &mut RgbImage, from: (i64, i64), to: (i64, i64), color: [u8; 3]) {
    let (mut x, mut y) = from;
    let dx = (to.0 - x).abs();
    let dy = -(to.1 - y).abs();
    let sx = if x < to.0 { 1 } else { -1 };
    let sy = if y < to.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        put(img, x, y, color);
        if (x, y) == to {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

pub fn draw_marker(img: &mut RgbImage, p: ImagePoint, color: [u8; 3]) {
    if !p.is_finite() {
        return;
    }
    let (cx, cy) = (p.x.floor() as i64, p.y.floor() as i64);
    for dy in -1..=1 {
        for dx in -1..=1 {
            put(img, cx + dx, cy + dy, color);
        }
    }
}

/// Draws `line` across the canvas; returns false if it misses.
pub fn draw_line(img: &mut RgbImage, line: &EpipolarLine, color: [u8; 3]) -> bool {
    let (w, h) = (img.width(), img.height());
    match clip_line(line, w as f64, h as f64) {
        Some((p, q)) => {
            draw_segment(img, (to_cell(p.x, w), to_cell(p.y, h)), (to_cell(q.x, w), to_cell(q.y, h)), color);
            true
        }
        None => false,
    }
}

fn canvas(background: Option<&GrayImage>, width: usize, height: usize) -> Result<RgbImage> {
    match background {
        Some(bg) if bg.width() != width || bg.height() != height => Err(Error::DimensionMismatch(format!(
            "background is {}x{}, canvas is {width}x{height}",
            bg.width(),
            bg.height()
        ))),
        Some(bg) => Ok(bg.map(|&v| {
            let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [g, g, g]
        })),
        None => Ok(Grid::filled(width, height, [0, 0, 0])),
    }
}

/// Renders every item's epipolar line, then all markers on top. Points at an
/// epipole are skipped and counted.
pub fn render_epilines(
    background: Option<&GrayImage>,
    width: usize,
    height: usize,
    f: &FundamentalMatrix,
    items: &[EpilineItem],
) -> Result<(RgbImage, RenderStats)> {
    if width == 0 || height == 0 {
        return Err(Error::ConfigInvalid(format!("canvas must be non-empty, got {width}x{height}")));
    }
    let mut img = canvas(background, width, height)?;
    let mut stats = RenderStats::default();
    for item in items {
        match epipolar_line(item.point, f, item.side) {
            Ok(line) if draw_line(&mut img, &line, LINE_COLOR) => stats.lines += 1,
            Ok(_) => stats.off_canvas += 1,
            Err(_) => stats.degenerate += 1,
        }
    }
    for item in items {
        draw_marker(&mut img, item.point, POINT_COLOR);
        if let Some(q) = item.partner {
            draw_marker(&mut img, q, PARTNER_COLOR);
        }
    }
    Ok((img, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_line_fills_row() {
        let mut img = Grid::filled(10, 5, [0, 0, 0]);
        // y = 2.5
        assert!(draw_line(&mut img, &EpipolarLine { a: 0.0, b: 1.0, c: -2.5 }, LINE_COLOR));
        for x in 0..10 {
            assert_eq!(*img.get(x, 2), LINE_COLOR);
            assert_eq!(*img.get(x, 1), [0, 0, 0]);
        }
    }

    #[test]
    fn diagonal_is_connected() {
        let mut img = Grid::filled(8, 8, [0, 0, 0]);
        draw_segment(&mut img, (0, 0), (7, 7), LINE_COLOR);
        for k in 0..8 {
            assert_eq!(*img.get(k, k), LINE_COLOR);
        }
        assert_eq!(img.data().iter().filter(|&&c| c == LINE_COLOR).count(), 8);
    }

    #[test]
    fn clipping_misses_and_hits() {
        // x = -3 is left of the canvas.
        assert!(clip_line(&EpipolarLine { a: 1.0, b: 0.0, c: 3.0 }, 10.0, 10.0).is_none());
        let (p, q) = clip_line(&EpipolarLine { a: 1.0, b: -1.0, c: 0.0 }, 10.0, 10.0).unwrap();
        assert!((p.x - p.y).abs() < 1e-12 && (q.x - q.y).abs() < 1e-12);
        assert!(((p.x - q.x).abs() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn marker_is_three_by_three_and_clipped() {
        let mut img = Grid::filled(5, 5, [0, 0, 0]);
        draw_marker(&mut img, ImagePoint::new(2.5, 2.5), POINT_COLOR);
        assert_eq!(img.data().iter().filter(|&&c| c == POINT_COLOR).count(), 9);
        let mut img = Grid::filled(5, 5, [0, 0, 0]);
        draw_marker(&mut img, ImagePoint::new(0.2, 0.2), POINT_COLOR);
        assert_eq!(img.data().iter().filter(|&&c| c == POINT_COLOR).count(), 4);
    }

    #[test]
    fn point_list_parsing() {
        let pts = parse_point_list("# pts\n1 2\n\n3.5 -4\n").unwrap();
        assert_eq!(pts, vec![ImagePoint::new(1.0, 2.0), ImagePoint::new(3.5, -4.0)]);
        assert!(parse_point_list("1 2 3\n").is_err());
    }
}
