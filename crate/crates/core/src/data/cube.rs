use super::DataError;

/// `H×W×bands` raster stored row-major with interleaved bands (HWC), values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageCube {
    height: usize,
    width: usize,
    bands: usize,
    data: Vec<f32>,
    /// Bit depth of the sensor the data was normalized from, e.g. 11 for WorldView.
    pub bit_depth_origin: Option<u8>,
    pub band_labels: Option<Vec<String>>,
}

impl ImageCube {
    pub fn new(
        height: usize,
        width: usize,
        bands: usize,
        data: Vec<f32>,
    ) -> Result<Self, DataError> {
        Self::check_extents(height, width, bands, data.len())?;
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(DataError::Range {
                index: i,
                value: *v as f64,
            });
        }
        Ok(ImageCube {
            height,
            width,
            bands,
            data,
            bit_depth_origin: None,
            band_labels: None,
        })
    }

    /// Builds a cube from arbitrary finite values, clamping into `[0, 1]`.
    pub fn from_clamped(
        height: usize,
        width: usize,
        bands: usize,
        data: Vec<f32>,
    ) -> Result<Self, DataError> {
        Self::check_extents(height, width, bands, data.len())?;
        if let Some((i, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::Range {
                index: i,
                value: *v as f64,
            });
        }
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(ImageCube {
            height,
            width,
            bands,
            data,
            bit_depth_origin: None,
            band_labels: None,
        })
    }

    /// Linear ingestion of raw sensor counts `[0, 2^bits - 1]` into `[0, 1]`.
    pub fn from_sensor(
        height: usize,
        width: usize,
        bands: usize,
        raw: &[u16],
        bits: u8,
    ) -> Result<Self, DataError> {
        if bits == 0 || bits > 16 {
            return Err(DataError::Config(format!("unsupported bit depth {bits}")));
        }
        let max = ((1u32 << bits) - 1) as f32;
        let data = raw.iter().map(|&v| v as f32 / max).collect();
        let mut cube = Self::new(height, width, bands, data)?;
        cube.bit_depth_origin = Some(bits);
        Ok(cube)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        bands: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, DataError> {
        let mut data = Vec::with_capacity(height * width * bands);
        for y in 0..height {
            for x in 0..width {
                for b in 0..bands {
                    data.push(f(y, x, b));
                }
            }
        }
        Self::new(height, width, bands, data)
    }

    pub fn constant(height: usize, width: usize, bands: usize, v: f32) -> Result<Self, DataError> {
        Self::new(height, width, bands, vec![v; height * width * bands])
    }

    fn check_extents(
        height: usize,
        width: usize,
        bands: usize,
        len: usize,
    ) -> Result<(), DataError> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(DataError::Shape(format!(
                "extents must be >= 1, got {height}x{width}x{bands}"
            )));
        }
        if height * width * bands != len {
            return Err(DataError::Shape(format!(
                "{height}x{width}x{bands} cube needs {} values, got {len}",
                height * width * bands
            )));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// `(height, width, bands)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.bands)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, b: usize) -> f32 {
        self.data[(y * self.width + x) * self.bands + b]
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let o = (y * self.width + x) * self.bands;
        &self.data[o..o + self.bands]
    }

    /// One band as a row-major plane.
    pub fn band(&self, b: usize) -> Vec<f32> {
        self.data
            .iter()
            .skip(b)
            .step_by(self.bands)
            .copied()
            .collect()
    }

    pub fn band_means(&self) -> Vec<f64> {
        let n = (self.height * self.width) as f64;
        let mut sums = vec![0.0f64; self.bands];
        for px in self.data.chunks_exact(self.bands) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Window `[y, y+h) × [x, x+w)`.
    pub fn crop(&self, y: usize, x: usize, h: usize, w: usize) -> Result<Self, DataError> {
        if h == 0 || w == 0 || y + h > self.height || x + w > self.width {
            return Err(DataError::Shape(format!(
                "crop {h}x{w} at ({y},{x}) outside {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(h * w * self.bands);
        for row in y..y + h {
            let o = (row * self.width + x) * self.bands;
            data.extend_from_slice(&self.data[o..o + w * self.bands]);
        }
        Ok(ImageCube {
            height: h,
            width: w,
            bands: self.bands,
            data,
            bit_depth_origin: self.bit_depth_origin,
            band_labels: self.band_labels.clone(),
        })
    }

    pub fn select_bands(&self, idx: &[usize]) -> Result<Self, DataError> {
        if idx.is_empty() || idx.iter().any(|&b| b >= self.bands) {
            return Err(DataError::Shape(format!(
                "band selection {idx:?} out of 0..{}",
                self.bands
            )));
        }
        let mut data = Vec::with_capacity(self.height * self.width * idx.len());
        for px in self.data.chunks_exact(self.bands) {
            data.extend(idx.iter().map(|&b| px[b]));
        }
        Ok(ImageCube {
            height: self.height,
            width: self.width,
            bands: idx.len(),
            data,
            bit_depth_origin: self.bit_depth_origin,
            band_labels: self
                .band_labels
                .as_ref()
                .map(|l| idx.iter().map(|&b| l[b].clone()).collect()),
        })
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, DataError> {
        if labels.len() != self.bands {
            return Err(DataError::Shape(format!(
                "{} labels for {} bands",
                labels.len(),
                self.bands
            )));
        }
        self.band_labels = Some(labels);
        Ok(self)
    }

    pub fn with_bit_depth(mut self, bits: Option<u8>) -> Self {
        self.bit_depth_origin = bits;
        self
    }
}
