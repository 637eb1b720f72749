//! Count images and their on-disk forms (16-bit PGM, CSV, sparse frame stack).

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};

/// Per-pixel event counts, row-major with `height` rows of `width` columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    pub counts: Vec<u64>,
    pub frames_accumulated: u64,
    pub discarded_tags: u64,
    pub pixel_pitch_um: f64,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, pixel_pitch_um: f64) -> Self {
        ImageGrid {
            width,
            height,
            counts: vec![0; width * height],
            frames_accumulated: 0,
            discarded_tags: 0,
            pixel_pitch_um,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[u64] {
        &self.counts[row * self.width..(row + 1) * self.width]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Events presented to the assignment, kept or not.
    pub fn events_seen(&self) -> u64 {
        self.total() + self.discarded_tags
    }

    pub fn populated_pixels(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn values(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn add(&mut self, other: &ImageGrid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.frames_accumulated += other.frames_accumulated;
        self.discarded_tags += other.discarded_tags;
        Ok(())
    }

    /// Writes a binary 16-bit PGM. Counts above 65535 are clamped; the
    /// number of clamped pixels is returned.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> Result<usize> {
        write!(out, "P5\n{} {}\n65535\n", self.width, self.height)?;
        let mut clamped = 0;
        let mut buf = Vec::with_capacity(self.counts.len() * 2);
        for &c in &self.counts {
            if c > u16::MAX as u64 {
                clamped += 1;
            }
            buf.extend_from_slice(&(c.min(u16::MAX as u64) as u16).to_be_bytes());
        }
        out.write_all(&buf)?;
        Ok(clamped)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write_csv_header(
            &mut out,
            self.width,
            self.height,
            self.frames_accumulated,
            self.pixel_pitch_um,
        )?;
        for r in 0..self.height {
            write_row(&mut out, self.row(r).iter())?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<ImageGrid> {
        let (header, rows) = read_csv_body(input)?;
        let mut grid = ImageGrid::new(header.width, header.height, header.pixel_pitch_um);
        grid.frames_accumulated = header.frames;
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                grid.counts[r * header.width + c] = v
                    .parse()
                    .map_err(|_| Error::Format(format!("bad count {v:?} at row {r}")))?;
            }
        }
        Ok(grid)
    }
}

/// Element-wise sum of frame images.
pub fn accumulate_frames<'a>(grids: impl IntoIterator<Item = &'a ImageGrid>) -> Result<ImageGrid> {
    let mut iter = grids.into_iter();
    let mut acc = iter
        .next()
        .ok_or_else(|| Error::InvalidArgument("no frames to accumulate".into()))?
        .clone();
    for g in iter {
        acc.add(g)?;
    }
    Ok(acc)
}

/// Real-valued image, used for noise-free expectations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub frames: u64,
    pub pixel_pitch_um: f64,
}

impl ExpectedImage {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write_csv_header(
            &mut out,
            self.width,
            self.height,
            self.frames,
            self.pixel_pitch_um,
        )?;
        for r in 0..self.height {
            write_row(
                &mut out,
                self.values[r * self.width..(r + 1) * self.width].iter(),
            )?;
        }
        Ok(())
    }

    /// Nearest-integer count image.
    pub fn to_grid(&self) -> ImageGrid {
        ImageGrid {
            width: self.width,
            height: self.height,
            counts: self
                .values
                .iter()
                .map(|v| v.max(0.0).round() as u64)
                .collect(),
            frames_accumulated: self.frames,
            discarded_tags: 0,
            pixel_pitch_um: self.pixel_pitch_um,
        }
    }
}

/// Writes per-frame images as sparse `frame,row,col,counts` records.
pub fn write_frame_stack<W: Write>(frames: &[ImageGrid], mut out: W) -> Result<()> {
    let (width, height, pitch) = frames
        .first()
        .map(|g| (g.width, g.height, g.pixel_pitch_um))
        .unwrap_or((0, 0, 0.0));
    write_csv_header(&mut out, width, height, frames.len() as u64, pitch)?;
    writeln!(out, "frame,row,col,counts")?;
    for (f, g) in frames.iter().enumerate() {
        for (k, &c) in g.counts.iter().enumerate() {
            if c > 0 {
                writeln!(out, "{f},{},{},{c}", k / g.width, k % g.width)?;
            }
        }
    }
    Ok(())
}

pub fn read_frame_stack<R: BufRead>(input: R) -> Result<Vec<ImageGrid>> {
    let mut lines = input.lines();
    let header = parse_header(&mut lines)?;
    let mut frames: Vec<ImageGrid> = (0..header.frames)
        .map(|_| {
            let mut g = ImageGrid::new(header.width, header.height, header.pixel_pitch_um);
            g.frames_accumulated = 1;
            g
        })
        .collect();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if n == 0 && line.starts_with("frame") {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<u64> = line
            .split(',')
            .map(|v| v.trim().parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Format(format!("bad frame record {line:?}")))?;
        let &[f, r, c, counts] = fields.as_slice() else {
            return Err(Error::Format(format!("bad frame record {line:?}")));
        };
        let (f, r, c) = (f as usize, r as usize, c as usize);
        if f >= frames.len() || r >= header.height || c >= header.width {
            return Err(Error::Format(format!("frame record out of range {line:?}")));
        }
        frames[f].counts[r * header.width + c] += counts;
    }
    Ok(frames)
}

struct CsvHeader {
    width: usize,
    height: usize,
    frames: u64,
    pixel_pitch_um: f64,
}

fn write_csv_header<W: Write>(
    out: &mut W,
    w: usize,
    h: usize,
    frames: u64,
    pitch: f64,
) -> Result<()> {
    writeln!(out, "# width,height,frames,pixel_pitch_um")?;
    writeln!(out, "# {w},{h},{frames},{pitch}")?;
    Ok(())
}

fn write_row<W: Write, T: std::fmt::Display>(
    out: &mut W,
    values: impl Iterator<Item = T>,
) -> Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            out.write_all(b",")?;
        }
        write!(out, "{v}")?;
        first = false;
    }
    out.write_all(b"\n")?;
    Ok(())
}

fn parse_header<I>(lines: &mut I) -> Result<CsvHeader>
where
    I: Iterator<Item = std::io::Result<String>>,
{
    let mut next = || -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Format("missing image header".into()))
    };
    let names = next()?;
    if names.trim() != "# width,height,frames,pixel_pitch_um" {
        return Err(Error::Format(format!("unexpected image header {names:?}")));
    }
    let values = next()?;
    let fields: Vec<&str> = values
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Format("missing image dimensions".into()))?
        .split(',')
        .map(str::trim)
        .collect();
    let bad = || Error::Format(format!("bad image dimensions {values:?}"));
    if fields.len() != 4 {
        return Err(bad());
    }
    Ok(CsvHeader {
        width: fields[0].parse().map_err(|_| bad())?,
        height: fields[1].parse().map_err(|_| bad())?,
        frames: fields[2].parse().map_err(|_| bad())?,
        pixel_pitch_um: fields[3].parse().map_err(|_| bad())?,
    })
}

fn read_csv_body<R: BufRead>(input: R) -> Result<(CsvHeader, Vec<Vec<String>>)> {
    let mut lines = input.lines();
    let header = parse_header(&mut lines)?;
    let mut rows = Vec::with_capacity(header.height);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<String> = line.split(',').map(|v| v.trim().to_owned()).collect();
        if row.len() != header.width {
            return Err(Error::Format(format!(
                "row {} has {} values, expected {}",
                rows.len(),
                row.len(),
                header.width
            )));
        }
        rows.push(row);
    }
    if rows.len() != header.height {
        return Err(Error::Format(format!(
            "image has {} rows, expected {}",
            rows.len(),
            header.height
        )));
    }
    Ok((header, rows))
}
