use crate::error::{Error, Result};
use crate::image::Image;
use crate::seqtok::BBox;

/// Affine map from frame pixels to crop pixels: `u = (x - x0) * scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CropTransform {
    pub x0: f64,
    pub y0: f64,
    pub scale: f64,
}

impl CropTransform {
    fn check(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale > 0.0) || !self.x0.is_finite() || !self.y0.is_finite() {
            return Err(Error::InvalidArgument(format!("degenerate crop transform {self:?}")));
        }
        Ok(())
    }

    pub fn point_to_crop(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.x0) * self.scale, (y - self.y0) * self.scale)
    }

    pub fn point_to_frame(&self, u: f64, v: f64) -> (f64, f64) {
        (u / self.scale + self.x0, v / self.scale + self.y0)
    }
}

/// Square window of side `factor * sqrt(w * h)` centered on `b`, resampled
/// bilinearly to `out_size`. Pixels outside the frame read as the frame's
/// mean color.
pub fn crop_region(frame: &Image, b: &BBox, factor: f64, out_size: usize) -> Result<(Image, CropTransform)> {
    b.validate()?;
    if b.area() <= 0.0 {
        return Err(Error::InvalidBox(format!("zero-area box {:?}", b.xywh())));
    }
    if !(factor >= 1.0) || out_size == 0 {
        return Err(Error::InvalidArgument(format!("factor {factor}, size {out_size}")));
    }
    let side = factor * b.area().sqrt();
    let (cx, cy) = b.center_point();
    let t = CropTransform {
        x0: cx - side / 2.0,
        y0: cy - side / 2.0,
        scale: out_size as f64 / side,
    };
    t.check()?;

    let fill = frame.mean_color();
    let (fh, fw) = (frame.height() as isize, frame.width() as isize);
    let src = frame.data();
    let fetch = |y: isize, x: isize| -> [f32; 3] {
        if y < 0 || x < 0 || y >= fh || x >= fw {
            fill
        } else {
            let i = ((y * fw + x) * 3) as usize;
            [src[i], src[i + 1], src[i + 2]]
        }
    };
    let mut out = Vec::with_capacity(out_size * out_size * 3);
    for i in 0..out_size {
        let sy = t.y0 + (i as f64 + 0.5) / t.scale - 0.5;
        let y0 = sy.floor();
        let wy = sy - y0;
        for j in 0..out_size {
            let sx = t.x0 + (j as f64 + 0.5) / t.scale - 0.5;
            let x0 = sx.floor();
            let wx = sx - x0;
            let (yi, xi) = (y0 as isize, x0 as isize);
            let (a, bb, c, d) = (fetch(yi, xi), fetch(yi, xi + 1), fetch(yi + 1, xi), fetch(yi + 1, xi + 1));
            for ch in 0..3 {
                let top = a[ch] as f64 * (1.0 - wx) + bb[ch] as f64 * wx;
                let bottom = c[ch] as f64 * (1.0 - wx) + d[ch] as f64 * wx;
                out.push((top * (1.0 - wy) + bottom * wy) as f32);
            }
        }
    }
    Ok((Image::new(out_size, out_size, out)?, t))
}

fn map_box(b: &BBox, f: impl Fn(f64, f64) -> (f64, f64)) -> BBox {
    let c = b.to_corner().coords;
    let (x1, y1) = f(c[0], c[1]);
    let (x2, y2) = f(c[2], c[3]);
    BBox::corner(x1, y1, x2, y2).to_format(b.format)
}

pub fn box_frame_to_search(b: &BBox, t: &CropTransform) -> Result<BBox> {
    t.check()?;
    Ok(map_box(b, |x, y| t.point_to_crop(x, y)))
}

pub fn box_search_to_frame(b: &BBox, t: &CropTransform) -> Result<BBox> {
    t.check()?;
    Ok(map_box(b, |u, v| t.point_to_frame(u, v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqtok::BoxFormat;

    fn gradient_frame(h: usize, w: usize) -> Image {
        let data = (0..h * w * 3).map(|i| ((i * 37) % 251) as f32 / 251.0).collect();
        Image::new(h, w, data).unwrap()
    }

    #[test]
    fn passthrough_window() {
        let frame = gradient_frame(40, 40);
        // side = 2 * 8 = 16 = out size; window starts at (10, 12)
        let b = BBox::from_xywh(14.0, 16.0, 8.0, 8.0);
        let (crop, t) = crop_region(&frame, &b, 2.0, 16).unwrap();
        assert_eq!((t.x0, t.y0, t.scale), (10.0, 12.0, 1.0));
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(crop.pixel(i, j), frame.pixel(12 + i, 10 + j));
            }
        }
    }

    #[test]
    fn corner_box_is_mostly_fill() {
        let mut frame = Image::filled(32, 32, [1.0, 1.0, 1.0]);
        frame.set_pixel(0, 0, [0.0, 0.0, 0.0]);
        let fill = frame.mean_color();
        let b = BBox::center(0.0, 0.0, 4.0, 4.0);
        let (crop, _) = crop_region(&frame, &b, 4.0, 16).unwrap();
        let filled = (0..16)
            .flat_map(|i| (0..16).map(move |j| (i, j)))
            .filter(|&(i, j)| crop.pixel(i, j) == fill)
            .count();
        // 3/4 of the window is outside the frame; one boundary row and column blend
        assert!((3 * 64 - 16..=3 * 64 + 16).contains(&filled), "{filled}");
    }

    #[test]
    fn box_center_maps_to_crop_center() {
        let frame = gradient_frame(50, 60);
        let b = BBox::from_xywh(13.0, 7.5, 9.0, 4.0);
        let (_, t) = crop_region(&frame, &b, 4.0, 64).unwrap();
        let (cx, cy) = b.center_point();
        let (u, v) = t.point_to_crop(cx, cy);
        assert!((u - 32.0).abs() < 1e-12 && (v - 32.0).abs() < 1e-12);
        let s = box_frame_to_search(&b, &t).unwrap();
        let (su, sv) = s.center_point();
        assert!((su - 32.0).abs() < 1e-12 && (sv - 32.0).abs() < 1e-12);
    }

    #[test]
    fn transforms_are_inverse() {
        let t = CropTransform { x0: -3.25, y0: 17.5, scale: 1.7 };
        for fmt in [BoxFormat::Corner, BoxFormat::Center] {
            let b = BBox::from_xywh(4.0, 9.0, 11.0, 5.5).to_format(fmt);
            let back = box_search_to_frame(&box_frame_to_search(&b, &t).unwrap(), &t).unwrap();
            assert_eq!(back.format, fmt);
            for (x, y) in back.coords.iter().zip(b.coords) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn hand_evaluated_affine() {
        let t = CropTransform { x0: 10.0, y0: 20.0, scale: 2.0 };
        let b = BBox::corner(12.0, 21.0, 15.0, 30.0);
        let s = box_frame_to_search(&b, &t).unwrap();
        assert_eq!(s.coords, [4.0, 2.0, 10.0, 20.0]);
        let c = box_frame_to_search(&b.to_center(), &t).unwrap();
        assert_eq!(c.coords, [7.0, 11.0, 6.0, 18.0]);
    }

    #[test]
    fn errors() {
        let frame = gradient_frame(8, 8);
        assert!(crop_region(&frame, &BBox::from_xywh(1.0, 1.0, 0.0, 3.0), 2.0, 8).is_err());
        assert!(crop_region(&frame, &BBox::from_xywh(1.0, 1.0, 2.0, 3.0), 0.5, 8).is_err());
        let bad = CropTransform { x0: 0.0, y0: 0.0, scale: 0.0 };
        assert!(box_frame_to_search(&BBox::from_xywh(1.0, 1.0, 2.0, 2.0), &bad).is_err());
    }
}
