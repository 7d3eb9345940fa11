use super::Image;
use crate::detect::BoundingBox;

/// Outline colors, indexed by class id modulo 20.
pub const PALETTE: [[u8; 3]; 20] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [255, 250, 200],
    [128, 0, 0],
    [170, 255, 195],
    [128, 128, 0],
    [255, 215, 180],
    [0, 0, 128],
    [128, 128, 128],
];

const THICKNESS: usize = 2;

/// Returns a copy with 2-pixel box outlines. Boxes are clipped to the image; gray images
/// are promoted to RGB first.
pub fn draw_boxes(image: &Image, boxes: &[BoundingBox]) -> Image {
    let mut out = image.to_rgb();
    let (w, h) = (out.width(), out.height());
    for b in boxes {
        let Some((left, right)) = span(b.x1, b.x2, w) else {
            continue;
        };
        let Some((top, bottom)) = span(b.y1, b.y2, h) else {
            continue;
        };
        let color = PALETTE[b.class_id % PALETTE.len()];
        for y in top..=bottom {
            for x in left..=right {
                let edge = x < left + THICKNESS
                    || x + THICKNESS > right
                    || y < top + THICKNESS
                    || y + THICKNESS > bottom;
                if edge {
                    let i = (y * w + x) * 3;
                    out.pixels[i..i + 3].copy_from_slice(&color);
                }
            }
        }
    }
    out
}

/// Inclusive pixel range covered by `[lo, hi)`, clipped to `[0, n)`.
fn span(lo: f32, hi: f32, n: usize) -> Option<(usize, usize)> {
    if !(lo.is_finite() && hi.is_finite()) {
        return None;
    }
    let a = lo.floor().max(0.0);
    let b = (hi.ceil() - 1.0).min(n as f32 - 1.0);
    (b >= a).then_some((a as usize, b as usize))
}
