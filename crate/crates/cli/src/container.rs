//! The LCX1 binary container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "LCX1" | version u32 | ndim u32 | dims ndim×u32 | dtype u32 | [mask extension] | payload
//! ```
//!
//! dtype 0 is complex128 (interleaved f64 real, imag), 1 is a u64 index list
//! and 2 is f64. Matrices are column-major, 3-D arrays frame-major. Index
//! lists carry a mask extension `ny u32 | nx u32 | q u32 | q×u64 counts`
//! and hold the frames' indices back to back.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use lrccs::linalg::{ComplexMatrix, C64};
use lrccs::sampling::{Grid, SamplingMask};
use lrccs::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LCX1";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    Complex128 = 0,
    IndexU64 = 1,
    Float64 = 2,
}

impl Dtype {
    fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(Dtype::Complex128),
            1 => Ok(Dtype::IndexU64),
            2 => Ok(Dtype::Float64),
            _ => Err(Error::Format(format!("unknown dtype code {code}"))),
        }
    }

    pub fn element_size(self) -> usize {
        match self {
            Dtype::Complex128 => 16,
            Dtype::IndexU64 | Dtype::Float64 => 8,
        }
    }
}

/// Per-frame layout stored with index lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskExtension {
    pub ny: u32,
    pub nx: u32,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Header {
    pub version: u32,
    pub dims: Vec<u32>,
    pub dtype: Dtype,
    pub mask: Option<MaskExtension>,
}

impl Header {
    pub fn elements(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }

    pub fn payload_bytes(&self) -> u64 {
        self.elements() * self.dtype.element_size() as u64
    }

    pub fn byte_len(&self) -> u64 {
        let ext = self
            .mask
            .as_ref()
            .map_or(0, |m| 12 + 8 * m.counts.len() as u64);
        4 + 4 + 4 + 4 * self.dims.len() as u64 + 4 + ext
    }

    fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.version.to_le_bytes())?;
        w.write_all(&(self.dims.len() as u32).to_le_bytes())?;
        for d in &self.dims {
            w.write_all(&d.to_le_bytes())?;
        }
        w.write_all(&(self.dtype as u32).to_le_bytes())?;
        if let Some(m) = &self.mask {
            w.write_all(&m.ny.to_le_bytes())?;
            w.write_all(&m.nx.to_le_bytes())?;
            w.write_all(&(m.counts.len() as u32).to_le_bytes())?;
            for c in &m.counts {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        Ok(())
    }

    fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, expected \"LCX1\""
            )));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let ndim = read_u32(r)?;
        if ndim == 0 || ndim > 8 {
            return Err(Error::Format(format!("ndim {ndim} outside 1..=8")));
        }
        let dims = (0..ndim).map(|_| read_u32(r)).collect::<Result<Vec<_>>>()?;
        let dtype = Dtype::from_code(read_u32(r)?)?;
        let mask = if dtype == Dtype::IndexU64 {
            let ny = read_u32(r)?;
            let nx = read_u32(r)?;
            let q = read_u32(r)?;
            let counts = (0..q).map(|_| read_u64(r)).collect::<Result<Vec<_>>>()?;
            Some(MaskExtension { ny, nx, counts })
        } else {
            None
        };
        Ok(Header {
            version,
            dims,
            dtype,
            mask,
        })
    }
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(f64::from_le_bytes(b))
}

fn dim(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::Format(format!("{what} {value} does not fit in u32")))
}

fn write_complex(w: &mut impl Write, values: &[C64]) -> Result<()> {
    for z in values {
        w.write_all(&z.re.to_le_bytes())?;
        w.write_all(&z.im.to_le_bytes())?;
    }
    Ok(())
}

fn read_complex(r: &mut impl Read, count: usize) -> Result<Vec<C64>> {
    (0..count)
        .map(|_| Ok(C64::new(read_f64(r)?, read_f64(r)?)))
        .collect()
}

/// Reads a header and checks that the file holds exactly its payload.
fn open_checked(path: &Path) -> Result<(BufReader<File>, Header)> {
    let file = File::open(path)?;
    let len = file.metadata()?.len();
    let mut r = BufReader::new(file);
    let header = Header::read_from(&mut r)?;
    let expected = header.byte_len() + header.payload_bytes();
    if len != expected {
        return Err(Error::Format(format!(
            "{}: {len} bytes on disk, header implies {expected}",
            path.display()
        )));
    }
    Ok((r, header))
}

pub fn read_header(path: &Path) -> Result<Header> {
    open_checked(path).map(|(_, h)| h)
}

/// Writes a complex array of any shape; `values` are in container order.
pub fn write_complex_array(path: &Path, dims: &[usize], values: &[C64]) -> Result<()> {
    let dims = dims
        .iter()
        .map(|&d| dim(d, "dimension"))
        .collect::<Result<Vec<_>>>()?;
    let header = Header {
        version: VERSION,
        dims,
        dtype: Dtype::Complex128,
        mask: None,
    };
    if header.elements() != values.len() as u64 {
        return Err(Error::DimensionMismatch(format!(
            "{} values for dims {:?}",
            values.len(),
            header.dims
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    header.write_to(&mut w)?;
    write_complex(&mut w, values)?;
    w.flush()?;
    Ok(())
}

pub fn read_complex_array(path: &Path) -> Result<(Vec<usize>, Vec<C64>)> {
    let (mut r, header) = open_checked(path)?;
    if header.dtype != Dtype::Complex128 {
        return Err(Error::Format(format!(
            "{}: expected complex data",
            path.display()
        )));
    }
    let values = read_complex(&mut r, header.elements() as usize)?;
    Ok((header.dims.iter().map(|&d| d as usize).collect(), values))
}

pub fn write_matrix(path: &Path, m: &ComplexMatrix) -> Result<()> {
    write_complex_array(path, &[m.rows(), m.cols()], m.as_slice())
}

pub fn read_matrix(path: &Path) -> Result<ComplexMatrix> {
    let (dims, values) = read_complex_array(path)?;
    if dims.len() != 2 {
        return Err(Error::Format(format!(
            "{}: expected a 2-D array, found dims {dims:?}",
            path.display()
        )));
    }
    ComplexMatrix::from_col_major(dims[0], dims[1], values)
}

pub fn write_real(path: &Path, dims: &[usize], values: &[f64]) -> Result<()> {
    let dims = dims
        .iter()
        .map(|&d| dim(d, "dimension"))
        .collect::<Result<Vec<_>>>()?;
    let header = Header {
        version: VERSION,
        dims,
        dtype: Dtype::Float64,
        mask: None,
    };
    if header.elements() != values.len() as u64 {
        return Err(Error::DimensionMismatch(format!(
            "{} values for dims {:?}",
            values.len(),
            header.dims
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    header.write_to(&mut w)?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_real(path: &Path) -> Result<(Vec<usize>, Vec<f64>)> {
    let (mut r, header) = open_checked(path)?;
    if header.dtype != Dtype::Float64 {
        return Err(Error::Format(format!(
            "{}: expected real data",
            path.display()
        )));
    }
    let values = (0..header.elements())
        .map(|_| read_f64(&mut r))
        .collect::<Result<Vec<_>>>()?;
    Ok((header.dims.iter().map(|&d| d as usize).collect(), values))
}

pub fn write_mask(path: &Path, mask: &SamplingMask) -> Result<()> {
    let grid = mask.grid();
    let counts: Vec<u64> = mask.counts().iter().map(|&c| c as u64).collect();
    let total: usize = mask.counts().iter().sum();
    let header = Header {
        version: VERSION,
        dims: vec![dim(total, "index count")?],
        dtype: Dtype::IndexU64,
        mask: Some(MaskExtension {
            ny: dim(grid.ny, "grid rows")?,
            nx: dim(grid.nx, "grid columns")?,
            counts,
        }),
    };
    dim(mask.q(), "frame count")?;
    let mut w = BufWriter::new(File::create(path)?);
    header.write_to(&mut w)?;
    for frame in mask.frames() {
        for &i in frame {
            w.write_all(&(i as u64).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<SamplingMask> {
    let (mut r, header) = open_checked(path)?;
    let ext = match (&header.dtype, &header.mask) {
        (Dtype::IndexU64, Some(ext)) => ext.clone(),
        _ => {
            return Err(Error::Format(format!(
                "{}: expected a sampling mask",
                path.display()
            )))
        }
    };
    if header.dims.len() != 1 || ext.counts.iter().sum::<u64>() != header.elements() {
        return Err(Error::Format(format!(
            "{}: frame counts do not add up to the stored index count",
            path.display()
        )));
    }
    let grid = Grid::new(ext.ny as usize, ext.nx as usize);
    let mut frames = Vec::with_capacity(ext.counts.len());
    for &c in &ext.counts {
        let frame = (0..c)
            .map(|_| {
                let i = read_u64(&mut r)?;
                usize::try_from(i).map_err(|_| Error::Format(format!("index {i} overflows usize")))
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(frame);
    }
    SamplingMask::new(grid, frames).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Appends the columns of an `rows x cols` complex matrix one at a time.
///
/// The header is written up front, so a reader can see the final shape
/// while the file is still growing.
pub struct ColumnWriter {
    w: BufWriter<File>,
    rows: usize,
    cols: usize,
    written: usize,
}

impl ColumnWriter {
    pub fn create(path: &Path, rows: usize, cols: usize) -> Result<Self> {
        let header = Header {
            version: VERSION,
            dims: vec![dim(rows, "rows")?, dim(cols, "columns")?],
            dtype: Dtype::Complex128,
            mask: None,
        };
        let mut w = BufWriter::new(File::create(path)?);
        header.write_to(&mut w)?;
        w.flush()?;
        Ok(ColumnWriter {
            w,
            rows,
            cols,
            written: 0,
        })
    }

    /// Writes one column and flushes it to disk.
    pub fn push(&mut self, column: &[C64]) -> Result<()> {
        if column.len() != self.rows || self.written == self.cols {
            return Err(Error::DimensionMismatch(format!(
                "column {} of length {} for a {}x{} container",
                self.written,
                column.len(),
                self.rows,
                self.cols
            )));
        }
        write_complex(&mut self.w, column)?;
        self.w.flush()?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    /// Checks that every declared column arrived.
    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        if self.written != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "{} of {} columns written",
                self.written, self.cols
            )));
        }
        Ok(())
    }
}

/// Random access to the columns of a complex matrix container.
pub struct ColumnReader {
    r: BufReader<File>,
    offset: u64,
    rows: usize,
    cols: usize,
}

impl ColumnReader {
    pub fn open(path: &Path) -> Result<Self> {
        let (r, header) = open_checked(path)?;
        if header.dtype != Dtype::Complex128 || header.dims.len() != 2 {
            return Err(Error::Format(format!(
                "{}: expected a complex matrix",
                path.display()
            )));
        }
        Ok(ColumnReader {
            offset: header.byte_len(),
            rows: header.dims[0] as usize,
            cols: header.dims[1] as usize,
            r,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&mut self, j: usize) -> Result<Vec<C64>> {
        if j >= self.cols {
            return Err(Error::DimensionMismatch(format!(
                "column {j} of {}",
                self.cols
            )));
        }
        self.r
            .seek(SeekFrom::Start(self.offset + (j * self.rows * 16) as u64))?;
        read_complex(&mut self.r, self.rows)
    }
}
