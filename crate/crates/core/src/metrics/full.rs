use serde::{Deserialize, Serialize};

use super::quality::uqi;
use super::MetricError;
use crate::data::{blur_decimate, degrade::DEFAULT_BLUR_SIGMA, ImageCube};

/// Upper bound on the quality-index block side; smaller images use their own extent.
pub const QNR_BLOCK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FullScores {
    pub d_lambda: f64,
    pub d_s: f64,
    pub qnr: f64,
    /// Degenerate blocks skipped across every quality-index evaluation.
    pub skipped_blocks: usize,
}

struct Planes {
    h: usize,
    w: usize,
    bands: Vec<Vec<f64>>,
}

impl Planes {
    fn of(cube: &ImageCube) -> Self {
        let bands = (0..cube.bands())
            .map(|b| cube.band(b).into_iter().map(f64::from).collect())
            .collect();
        Planes {
            h: cube.height(),
            w: cube.width(),
            bands,
        }
    }

    fn q(&self, p: &[f64], q: &[f64], skipped: &mut usize) -> Result<f64, MetricError> {
        let block = QNR_BLOCK.min(self.h).min(self.w);
        let r = uqi(p, q, self.h, self.w, block)?;
        *skipped += r.skipped;
        Ok(r.value)
    }
}

/// Channel mean of the guide, so RGB guides reduce to one intensity plane.
fn guide_intensity(a: &ImageCube) -> Result<ImageCube, MetricError> {
    let c = a.bands();
    let data = a
        .data()
        .chunks_exact(c)
        .map(|px| px.iter().sum::<f32>() / c as f32)
        .collect();
    Ok(ImageCube::new(a.height(), a.width(), 1, data)?)
}

/// No-reference indexes of fused `o` against guide `a` and low-resolution `b`.
///
/// `D_λ = mean_{i<j} |Q(O_i, O_j) − Q(B_i, B_j)|`,
/// `D_s = mean_b |Q(O_b, A) − Q(B_b, A↓)|` with `A↓` the guide intensity blurred
/// and decimated by the datagen degradation, and `QNR = (1 − D_λ)(1 − D_s)`.
pub fn qnr_suite(
    o: &ImageCube,
    a: &ImageCube,
    b: &ImageCube,
    ratio: usize,
) -> Result<FullScores, MetricError> {
    let (h, w, c) = o.dims();
    if a.height() != h || a.width() != w {
        return Err(MetricError::Shape(format!(
            "guide {:?} vs fused {:?}",
            a.dims(),
            o.dims()
        )));
    }
    if ratio == 0 || b.dims() != (h / ratio, w / ratio, c) || h % ratio != 0 || w % ratio != 0 {
        return Err(MetricError::Shape(format!(
            "low-resolution {:?} vs fused {:?} at ratio {ratio}",
            b.dims(),
            o.dims()
        )));
    }
    if c < 2 {
        return Err(MetricError::Undefined(
            "spectral distortion needs at least 2 bands".into(),
        ));
    }
    let (po, pb) = (Planes::of(o), Planes::of(b));
    let mut skipped = 0;

    let mut d_lambda = 0.0;
    let mut pairs = 0;
    for i in 0..c {
        for j in i + 1..c {
            let qo = po.q(&po.bands[i], &po.bands[j], &mut skipped)?;
            let qb = pb.q(&pb.bands[i], &pb.bands[j], &mut skipped)?;
            d_lambda += (qo - qb).abs();
            pairs += 1;
        }
    }
    d_lambda /= pairs as f64;

    let guide = guide_intensity(a)?;
    let guide_low = blur_decimate(&guide, DEFAULT_BLUR_SIGMA, ratio)?;
    let (pa, pal) = (Planes::of(&guide), Planes::of(&guide_low));
    let mut d_s = 0.0;
    for k in 0..c {
        let qo = po.q(&po.bands[k], &pa.bands[0], &mut skipped)?;
        let qb = pb.q(&pb.bands[k], &pal.bands[0], &mut skipped)?;
        d_s += (qo - qb).abs();
    }
    d_s /= c as f64;

    Ok(FullScores {
        d_lambda,
        d_s,
        qnr: (1.0 - d_lambda) * (1.0 - d_s),
        skipped_blocks: skipped,
    })
}
