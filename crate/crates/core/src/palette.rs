//! Fixed colors shared by the RGB observation and the PNG renderer.

pub type Rgb = [u8; 3];

pub const FREE: Rgb = [255, 255, 255];
pub const MASKED: Rgb = [0, 0, 0];

/// Ten well-separated hues (the "tab10" set). Wall `k` uses entry `(k - 1) % 10`.
pub const WALLS: [Rgb; 10] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
];

pub fn wall_hard(wall_id: u32) -> Rgb {
    WALLS[(wall_id as usize + 9) % 10]
}

/// Hard color blended 50% with white.
pub fn wall_soft(wall_id: u32) -> Rgb {
    blend(wall_hard(wall_id), FREE, 1, 2)
}

/// Pale fill for room `k`, 25% of the hue over white.
pub fn room_fill(room_id: usize) -> Rgb {
    blend(WALLS[(room_id + 9) % 10], FREE, 3, 4)
}

/// `a + (b - a) * num / den`, per channel, rounded down.
fn blend(a: Rgb, b: Rgb, num: u16, den: u16) -> Rgb {
    let mix = |x: u8, y: u8| ((x as u16 * (den - num) + y as u16 * num) / den) as u8;
    [mix(a[0], b[0]), mix(a[1], b[1]), mix(a[2], b[2])]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_is_lighter_than_hard() {
        assert_eq!(wall_hard(1), [31, 119, 180]);
        assert_eq!(wall_soft(1), [143, 187, 217]);
        assert_eq!(wall_hard(11), wall_hard(1));
        for id in 1..=10 {
            let (h, s) = (wall_hard(id), wall_soft(id));
            assert!((0..3).all(|c| s[c] >= h[c]));
            assert_ne!(h, s);
        }
    }
}
