//! Sensor readout model: QVGA window crop followed by 2x2 binning.

use crate::image::GrayImage;

use super::SimError;

pub const SENSOR_SIZE: usize = 320;
pub const WINDOW_HEIGHT: usize = 240;
/// First sensor row of the vertically centered QVGA window.
pub const WINDOW_TOP: usize = (SENSOR_SIZE - WINDOW_HEIGHT) / 2;

/// Crops rows 40..280 of a 320x320 readout and bins each 2x2 block into its
/// rounded (half up) mean, giving 160x120.
pub fn bin_image(src: &GrayImage) -> Result<GrayImage, SimError> {
    if src.width() != SENSOR_SIZE || src.height() != SENSOR_SIZE {
        return Err(SimError::BadDimensions {
            width: src.width(),
            height: src.height(),
        });
    }
    Ok(GrayImage::from_fn(SENSOR_SIZE / 2, WINDOW_HEIGHT / 2, |x, y| {
        let (sx, sy) = (2 * x, WINDOW_TOP + 2 * y);
        let sum = src.get(sx, sy) as u32
            + src.get(sx + 1, sy) as u32
            + src.get(sx, sy + 1) as u32
            + src.get(sx + 1, sy + 1) as u32;
        ((sum + 2) / 4) as u8
    }))
}

/// The cropped 320x240 window, before binning.
pub fn qvga_window(src: &GrayImage) -> Result<GrayImage, SimError> {
    if src.width() != SENSOR_SIZE || src.height() != SENSOR_SIZE {
        return Err(SimError::BadDimensions {
            width: src.width(),
            height: src.height(),
        });
    }
    Ok(GrayImage::from_fn(SENSOR_SIZE, WINDOW_HEIGHT, |x, y| {
        src.get(x, y + WINDOW_TOP)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_image_stays_constant() {
        let out = bin_image(&GrayImage::filled(320, 320, 77)).unwrap();
        assert_eq!((out.width(), out.height()), (160, 120));
        assert!(out.pixels().iter().all(|&p| p == 77));
    }

    #[test]
    fn block_mean_rounds_half_up() {
        // block {10,20,30,40} at the top-left of the window
        let src = GrayImage::from_fn(320, 320, |x, y| match (x, y) {
            (0, 40) => 10,
            (1, 40) => 20,
            (0, 41) => 30,
            (1, 41) => 40,
            _ => 0,
        });
        assert_eq!(bin_image(&src).unwrap().get(0, 0), 25);
    }

    #[test]
    fn checkerboard_becomes_128() {
        let src = GrayImage::from_fn(320, 320, |x, y| if (x + y) % 2 == 0 { 0 } else { 255 });
        let out = bin_image(&src).unwrap();
        assert!(out.pixels().iter().all(|&p| p == 128));
    }

    #[test]
    fn rows_outside_window_are_ignored() {
        let src = GrayImage::from_fn(320, 320, |_, y| if (40..280).contains(&y) { 9 } else { 200 });
        assert!(bin_image(&src).unwrap().pixels().iter().all(|&p| p == 9));
    }

    #[test]
    fn wrong_size_rejected() {
        assert!(matches!(
            bin_image(&GrayImage::filled(320, 240, 0)),
            Err(SimError::BadDimensions { width: 320, height: 240 })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn binned_mean_tracks_window_mean(seed in any::<u64>()) {
            let mut state = seed | 1;
            let src = GrayImage::from_fn(320, 320, |_, _| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 24) as u8
            });
            let out = bin_image(&src).unwrap();
            let window = qvga_window(&src).unwrap();
            prop_assert!((out.mean() - window.mean()).abs() <= 0.5);
        }
    }
}
