//! FCUBE raster container.
//!
//! ```text
//! offset  size  field
//! 0       5     magic "FCUBE"
//! 5       1     version (1)
//! 6       4     height  (u32 LE)
//! 10      4     width   (u32 LE)
//! 14      4     bands   (u32 LE)
//! 18      1     bit_depth_origin (0 = none)
//! 19      4     label count L (u32 LE; 0 = no labels, else L = bands)
//! 23      ...   L × (u16 LE byte length, UTF-8 bytes)
//! ...     4·HWC grid, f32 LE, row-major with interleaved bands
//! ```
//!
//! The grid must end exactly at end of file.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{DataError, ImageCube};

pub const MAGIC: &[u8; 5] = b"FCUBE";
pub const VERSION: u8 = 1;

pub fn encode(cube: &ImageCube) -> Result<Vec<u8>, DataError> {
    let (h, w, c) = cube.dims();
    let mut out = Vec::with_capacity(32 + 4 * cube.data().len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for d in [h, w, c] {
        let d =
            u32::try_from(d).map_err(|_| DataError::Shape(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    out.push(cube.bit_depth_origin.unwrap_or(0));
    let labels = cube.band_labels.as_deref().unwrap_or(&[]);
    out.extend_from_slice(&(labels.len() as u32).to_le_bytes());
    for l in labels {
        let len = u16::try_from(l.len())
            .map_err(|_| DataError::Config(format!("band label too long: {} bytes", l.len())))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(l.as_bytes());
    }
    for v in cube.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], DataError> {
        if self.buf.len() - self.pos < n {
            return Err(DataError::Format {
                offset: self.buf.len() as u64,
                detail: format!(
                    "truncated while reading {what} ({n} bytes needed at {})",
                    self.pos
                ),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(
            self.take(4, what)?.try_into().expect("4 bytes"),
        ))
    }

    fn err(&self, offset: usize, detail: impl Into<String>) -> DataError {
        DataError::Format {
            offset: offset as u64,
            detail: detail.into(),
        }
    }
}

pub fn decode(buf: &[u8]) -> Result<ImageCube, DataError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(5, "magic")? != MAGIC {
        return Err(r.err(0, "bad magic"));
    }
    let version = r.take(1, "version")?[0];
    if version != VERSION {
        return Err(r.err(5, format!("unsupported version {version}")));
    }
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    let c = r.u32("bands")? as usize;
    if h == 0 || w == 0 || c == 0 {
        return Err(r.err(6, format!("zero extent {h}x{w}x{c}")));
    }
    let bits = r.take(1, "bit depth")?[0];
    let n_labels_at = r.pos;
    let n_labels = r.u32("label count")? as usize;
    if n_labels != 0 && n_labels != c {
        return Err(r.err(n_labels_at, format!("{n_labels} labels for {c} bands")));
    }
    let mut labels = Vec::with_capacity(n_labels);
    for _ in 0..n_labels {
        let len =
            u16::from_le_bytes(r.take(2, "label length")?.try_into().expect("2 bytes")) as usize;
        let at = r.pos;
        let bytes = r.take(len, "label")?;
        labels
            .push(String::from_utf8(bytes.to_vec()).map_err(|_| r.err(at, "label is not UTF-8"))?);
    }
    let n = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| r.err(6, "extents overflow"))?;
    let grid_at = r.pos;
    let grid = r.take(n, "grid")?;
    if r.pos != buf.len() {
        return Err(r.err(r.pos, format!("{} trailing bytes", buf.len() - r.pos)));
    }
    let data: Vec<f32> = grid
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
        .collect();
    let mut cube = ImageCube::new(h, w, c, data).map_err(|e| match e {
        DataError::Range { index, value } => {
            r.err(grid_at + 4 * index, format!("value {value} outside [0, 1]"))
        }
        other => other,
    })?;
    cube.bit_depth_origin = (bits != 0).then_some(bits);
    if n_labels > 0 {
        cube.band_labels = Some(labels);
    }
    Ok(cube)
}

pub fn read_cube(path: impl AsRef<Path>) -> Result<ImageCube, DataError> {
    decode(&fs::read(path)?)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_cube(cube: &ImageCube, path: impl AsRef<Path>) -> Result<(), DataError> {
    write_atomic(path.as_ref(), &encode(cube)?)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let name = path
        .file_name()
        .ok_or_else(|| DataError::Config(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = name.to_os_string();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let res = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(res?)
}
