//! Classification maps as binary PPM images.

use log::warn;

/// Colors of classes 1..=16; class 0 (unlabeled or not classified) is
/// black. Larger class ids wrap around the table.
pub const PALETTE: [[u8; 3]; 16] = [
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
];

pub fn color(class: u32) -> [u8; 3] {
    match class {
        0 => [0, 0, 0],
        c => PALETTE[(c as usize - 1) % PALETTE.len()],
    }
}

/// P6 image of a row-major label grid.
pub fn ppm(rows: usize, cols: usize, labels: &[u32]) -> Vec<u8> {
    if labels.iter().any(|&c| c as usize > PALETTE.len()) {
        warn!("more than {} classes: colors repeat", PALETTE.len());
    }
    let mut out = format!("P6\n{cols} {rows}\n255\n").into_bytes();
    out.reserve(rows * cols * 3);
    for &c in labels {
        out.extend_from_slice(&color(c));
    }
    out
}

/// Row-major label grid as CSV, one image row per line.
pub fn grid_csv(cols: usize, labels: &[u32]) -> String {
    let mut s = String::with_capacity(labels.len() * 3);
    for row in labels.chunks(cols) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}
