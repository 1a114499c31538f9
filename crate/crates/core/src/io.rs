//! File formats: TNSR v1 tensor dumps, PGM/PPM images and CSV helpers.
//!
//! A TNSR v1 file is one ASCII header line
//! `TNSR v1 <ndim> <extents...> <f32|f64>\n` followed by the flat row-major
//! data in little-endian byte order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmSubtype, SampleEncoding};
use image::{GrayImage, ImageEncoder, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Storage precision of a TNSR dump.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn tag(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

pub fn write_tnsr(out: &mut impl Write, t: &Tensor, precision: Precision) -> Result<()> {
    let mut header = format!("TNSR v1 {}", t.ndim());
    for e in t.shape() {
        header.push_str(&format!(" {e}"));
    }
    header.push_str(&format!(" {}\n", precision.tag()));
    out.write_all(header.as_bytes())?;
    match precision {
        Precision::F64 => {
            for v in t.data() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Precision::F32 => {
            for v in t.data() {
                out.write_all(&(*v as f32).to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_tnsr(input: &mut impl BufRead) -> Result<Tensor> {
    let mut header = String::new();
    input.read_line(&mut header)?;
    let line = header
        .strip_suffix('\n')
        .ok_or_else(|| Error::Format("TNSR header is not newline-terminated".into()))?;
    let fields: Vec<&str> = line.split(' ').collect();
    if fields.len() < 4 || fields[0] != "TNSR" || fields[1] != "v1" {
        return Err(Error::Format(format!("bad TNSR header {line:?}")));
    }
    let ndim: usize = fields[2]
        .parse()
        .map_err(|_| Error::Format(format!("bad ndim in {line:?}")))?;
    if fields.len() != ndim + 4 {
        return Err(Error::Format(format!(
            "header {line:?} declares {ndim} extents"
        )));
    }
    let shape = fields[3..3 + ndim]
        .iter()
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad extent {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let precision = match fields[3 + ndim] {
        "f32" => Precision::F32,
        "f64" => Precision::F64,
        other => return Err(Error::Format(format!("unknown precision {other:?}"))),
    };
    let n: usize = shape.iter().product();
    let width = if precision == Precision::F64 { 8 } else { 4 };
    let mut raw = vec![0u8; n * width];
    input
        .read_exact(&mut raw)
        .map_err(|e| Error::Format(format!("truncated TNSR payload: {e}")))?;
    let data = match precision {
        Precision::F64 => raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect(),
        Precision::F32 => raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("chunk of 4"))))
            .collect(),
    };
    Tensor::new(&shape, data)
}

pub fn save_tnsr(path: &Path, t: &Tensor, precision: Precision) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tnsr(&mut w, t, precision)?;
    w.flush()?;
    Ok(())
}

pub fn load_tnsr(path: &Path) -> Result<Tensor> {
    read_tnsr(&mut BufReader::new(File::open(path)?))
}

fn image_err(e: image::ImageError) -> Error {
    Error::Format(e.to_string())
}

/// Writes an 8-bit binary PGM (P5).
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    image::codecs::pnm::PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            pixels,
            width as u32,
            height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(image_err)
}

/// Writes an 8-bit binary PPM (P6), `pixels` interleaved RGB.
pub fn write_ppm(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    image::codecs::pnm::PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
        .write_image(
            pixels,
            width as u32,
            height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(image_err)
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    Ok(image::open(path).map_err(image_err)?.into_luma8())
}

pub fn read_ppm(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path).map_err(image_err)?.into_rgb8())
}

/// Maps a rank-2 tensor to 8-bit gray, scaling `[lo, hi]` to `[0, 255]`.
pub fn to_gray_u8(t: &Tensor, lo: f64, hi: f64) -> Vec<u8> {
    let span = if hi > lo { hi - lo } else { 1.0 };
    t.data()
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Formats one CSV row from displayable fields.
pub fn csv_row<I, T>(fields: I) -> String
where
    I: IntoIterator<Item = T>,
    T: std::fmt::Display,
{
    let mut s = fields
        .into_iter()
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join(",");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::new(&[2, 3], vec![0.0; 6]).unwrap();
        let mut buf = Vec::new();
        write_tnsr(&mut buf, &t, Precision::F64).unwrap();
        assert!(buf.starts_with(b"TNSR v1 2 2 3 f64\n"));
        assert_eq!(buf.len(), 18 + 48);
        let mut buf = Vec::new();
        write_tnsr(&mut buf, &Tensor::scalar(1.0), Precision::F32).unwrap();
        assert_eq!(&buf[..12], b"TNSR v1 0 f3");
        assert_eq!(&buf[14..], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_garbage() {
        let mut r: &[u8] = b"TNSR v2 1 3 f64\n";
        assert!(read_tnsr(&mut r).is_err());
        let mut r: &[u8] = b"TNSR v1 1 3 f64\n\x00\x00";
        assert!(matches!(read_tnsr(&mut r), Err(Error::Format(_))));
        let mut r: &[u8] = b"TNSR v1 2 3 f64\n";
        assert!(read_tnsr(&mut r).is_err());
    }

    #[test]
    fn pgm_and_ppm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        write_pgm(&p, 3, 2, &[0, 10, 20, 30, 40, 255]).unwrap();
        assert!(std::fs::read(&p).unwrap().starts_with(b"P5"));
        let g = read_pgm(&p).unwrap();
        assert_eq!(g.as_raw(), &[0, 10, 20, 30, 40, 255]);
        let p = dir.path().join("a.ppm");
        write_ppm(&p, 1, 2, &[1, 2, 3, 4, 5, 6]).unwrap();
        assert!(std::fs::read(&p).unwrap().starts_with(b"P6"));
        assert_eq!(read_ppm(&p).unwrap().as_raw(), &[1, 2, 3, 4, 5, 6]);
    }

    proptest! {
        #[test]
        fn tnsr_f64_round_trip(shape in proptest::collection::vec(0usize..4, 0..4), seed in any::<u64>()) {
            let mut s = seed;
            let t = Tensor::from_fn(&shape, |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            });
            let mut buf = Vec::new();
            write_tnsr(&mut buf, &t, Precision::F64).unwrap();
            let back = read_tnsr(&mut buf.as_slice()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
