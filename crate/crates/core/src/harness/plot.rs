use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::field::{write_atomic, Field};

/// How values map to colours.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorRange {
    /// `[min, max]` of the data.
    Data,
    /// `[−m, m]` with `m = max |v|`; used for vorticity.
    Symmetric,
}

/// One panel of a side-by-side figure; unobserved nodes of `mask` are drawn grey.
#[derive(Clone, Debug)]
pub struct Panel {
    pub field: Field,
    pub mask: Option<Field>,
}

impl Panel {
    pub fn new(field: Field) -> Self {
        Self { field, mask: None }
    }
}

const GAP: u32 = 4;
const GREY: Rgb<u8> = Rgb([160, 160, 160]);

fn lerp_stops(stops: &[[f64; 3]], t: f64) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
    let i = (t.floor() as usize).min(stops.len() - 2);
    let w = t - i as f64;
    let c = |k: usize| ((1.0 - w) * stops[i][k] + w * stops[i + 1][k]).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

fn colour(v: f64, lo: f64, hi: f64, range: ColorRange) -> Rgb<u8> {
    let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
    match range {
        ColorRange::Symmetric => lerp_stops(&[[33.0, 102.0, 172.0], [247.0, 247.0, 247.0], [178.0, 24.0, 43.0]], t),
        ColorRange::Data => lerp_stops(
            &[
                [68.0, 1.0, 84.0],
                [59.0, 82.0, 139.0],
                [33.0, 145.0, 140.0],
                [94.0, 201.0, 98.0],
                [253.0, 231.0, 37.0],
            ],
            t,
        ),
    }
}

/// The 2-D slice to draw: rank-2 fields as they are, rank-3 fields at `frame`.
fn slice(field: &Field, frame: Option<usize>) -> Result<Field> {
    match (field.rank(), frame) {
        (1, None) => field.reshape(vec![field.len(), 1]),
        (2, None) => Ok(field.clone()),
        (3, f) => {
            let f = f.unwrap_or(0);
            if f >= field.dims()[0] {
                return Err(Error::InvalidArgument(format!(
                    "frame {f} out of range for {} frames",
                    field.dims()[0]
                )));
            }
            field.frame(f)
        }
        (r, Some(f)) => Err(Error::InvalidArgument(format!("frame {f} requested for a rank-{r} field"))),
        (r, None) => Err(Error::InvalidArgument(format!("cannot plot a rank-{r} field"))),
    }
}

/// Draw panels left to right on a shared colour range, `scale` pixels per node.
/// Rows of the field run down the image, columns across.
pub fn render_panels(panels: &[Panel], frame: Option<usize>, range: ColorRange, scale: u32) -> Result<RgbImage> {
    if panels.is_empty() || scale == 0 {
        return Err(Error::InvalidArgument("need at least one panel and a positive scale".into()));
    }
    let mut slices = Vec::with_capacity(panels.len());
    for p in panels {
        let s = slice(&p.field, frame)?;
        let m = p.mask.as_ref().map(|m| slice(m, frame)).transpose()?;
        if let Some(m) = &m {
            s.ensure_same_dims(m)?;
        }
        slices.push((s, m));
    }
    let shown = |s: &Field, m: &Option<Field>| -> Vec<f64> {
        s.values()
            .iter()
            .enumerate()
            .filter(|(k, _)| m.as_ref().is_none_or(|m| m.values()[*k] == 1.0))
            .map(|(_, &v)| v)
            .collect()
    };
    let all: Vec<f64> = slices.iter().flat_map(|(s, m)| shown(s, m)).collect();
    let (lo, hi) = match range {
        ColorRange::Data => all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        ColorRange::Symmetric => {
            let m = all.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            (-m, m)
        }
    };
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let h = slices.iter().map(|(s, _)| s.dims()[0]).max().unwrap() as u32 * scale;
    let widths: Vec<u32> = slices.iter().map(|(s, _)| s.dims()[1] as u32 * scale).collect();
    let w = widths.iter().sum::<u32>() + GAP * (panels.len() as u32 - 1);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let mut x0 = 0;
    for ((s, m), pw) in slices.iter().zip(&widths) {
        let cols = s.dims()[1];
        for (k, &v) in s.values().iter().enumerate() {
            let c = match m {
                Some(m) if m.values()[k] != 1.0 => GREY,
                _ => colour(v, lo, hi, range),
            };
            let (i, j) = ((k / cols) as u32, (k % cols) as u32);
            for dy in 0..scale {
                for dx in 0..scale {
                    img.put_pixel(x0 + j * scale + dx, i * scale + dy, c);
                }
            }
        }
        x0 += pw + GAP;
    }
    Ok(img)
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|e| Error::Image(e.to_string()))?;
    write_atomic(path, buf.get_ref())
}

/// Heatmap of one field (one frame for rank-3 fields) written as PNG.
pub fn plot_field(field: &Field, frame: Option<usize>, range: ColorRange, scale: u32, out: &Path) -> Result<()> {
    save_png(&render_panels(&[Panel::new(field.clone())], frame, range, scale)?, out)
}
