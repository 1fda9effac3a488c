use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::spatial::Point;

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Single-band georeferenced raster.
///
/// Values are row-major with row 0 at the northern edge, as in the ESRI
/// ASCII layout. `(xll, yll)` is the lower-left corner of the lower-left cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    ncols: usize,
    nrows: usize,
    xll: f64,
    yll: f64,
    cellsize: f64,
    nodata: f64,
    values: Vec<f64>,
}

impl Grid {
    /// A grid filled with `nodata`.
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, nodata: f64) -> Result<Self> {
        Self::from_values(ncols, nrows, xll, yll, cellsize, nodata, vec![nodata; ncols * nrows])
    }

    pub fn from_values(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if !(cellsize > 0.0 && cellsize.is_finite()) {
            return Err(Error::InvalidGrid(format!("cellsize must be > 0, got {cellsize}")));
        }
        if ncols == 0 || nrows == 0 {
            return Err(Error::InvalidGrid("grid must have at least one cell".into()));
        }
        if values.len() != ncols * nrows {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                ncols * nrows,
                values.len()
            )));
        }
        if !xll.is_finite() || !yll.is_finite() {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self { ncols, nrows, xll, yll, cellsize, nodata, values })
    }

    /// Same geometry and nodata sentinel, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_values(self.ncols, self.nrows, self.xll, self.yll, self.cellsize, self.nodata, values)
    }

    /// Same geometry, every cell nodata.
    pub fn empty_like(&self) -> Self {
        Self { values: vec![self.nodata; self.values.len()], ..self.clone() }
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }
    pub fn nrows(&self) -> usize {
        self.nrows
    }
    pub fn xll(&self) -> f64 {
        self.xll
    }
    pub fn yll(&self) -> f64 {
        self.yll
    }
    pub fn cellsize(&self) -> f64 {
        self.cellsize
    }
    pub fn nodata(&self) -> f64 {
        self.nodata
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self) -> f64 {
        self.ncols as f64 * self.cellsize
    }
    pub fn height(&self) -> f64 {
        self.nrows as f64 * self.cellsize
    }

    #[inline]
    pub fn is_nodata(&self, v: f64) -> bool {
        v.is_nan() || v == self.nodata
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.ncols + col
    }

    /// Valid value at (row, col), `None` for nodata or out of range.
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if row >= self.nrows || col >= self.ncols {
            return None;
        }
        let v = self.values[self.index(row, col)];
        (!self.is_nodata(v)).then_some(v)
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        let i = self.index(row, col);
        self.values[i] = v;
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        Point::new(
            self.xll + (col as f64 + 0.5) * self.cellsize,
            self.yll + (self.nrows as f64 - row as f64 - 0.5) * self.cellsize,
        )
    }

    /// Cell containing `p`; points on the east/north outer edge are outside.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        let fx = (p.x - self.xll) / self.cellsize;
        let fy = (self.yll + self.height() - p.y) / self.cellsize;
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (col, row) = (fx.floor() as usize, fy.floor() as usize);
        (col < self.ncols && row < self.nrows).then_some((row, col))
    }

    pub fn value_at(&self, p: Point) -> Option<f64> {
        self.cell_of(p).and_then(|(r, c)| self.get(r, c))
    }

    pub fn contains(&self, p: Point) -> bool {
        self.cell_of(p).is_some()
    }

    pub fn same_geometry(&self, other: &Grid) -> bool {
        self.ncols == other.ncols
            && self.nrows == other.nrows
            && self.xll == other.xll
            && self.yll == other.yll
            && self.cellsize == other.cellsize
    }

    /// Iterator over valid values.
    pub fn valid_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(move |v| !self.is_nodata(*v))
    }

    pub fn valid_count(&self) -> usize {
        self.valid_values().count()
    }

    pub fn mean(&self) -> Option<f64> {
        let (s, n) = self.valid_values().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        (n > 0).then(|| s / n as f64)
    }

    pub fn min_max(&self) -> Option<(f64, f64)> {
        self.valid_values().fold(None, |acc, v| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    /// Applies `f` to valid cells; nodata stays nodata.
    pub fn map_valid(&self, f: impl Fn(f64) -> f64) -> Grid {
        let values = self
            .values
            .iter()
            .map(|&v| if self.is_nodata(v) { self.nodata } else { f(v) })
            .collect();
        Grid { values, ..self.clone() }
    }

    /// 3×3 patch of valid values centred on (row, col); missing cells are `None`.
    pub fn patch3(&self, row: usize, col: usize) -> [[Option<f64>; 3]; 3] {
        let mut out = [[None; 3]; 3];
        for (dr, line) in out.iter_mut().enumerate() {
            for (dc, cell) in line.iter_mut().enumerate() {
                let r = row as isize + dr as isize - 1;
                let c = col as isize + dc as isize - 1;
                if r >= 0 && c >= 0 {
                    *cell = self.get(r as usize, c as usize);
                }
            }
        }
        out
    }

    // ---- ESRI ASCII grid ---------------------------------------------------

    pub fn read_ascii(path: impl AsRef<Path>) -> Result<Grid> {
        let path = path.as_ref();
        let file = fs::File::open(path)?;
        Self::parse_ascii(BufReader::new(file), path)
    }

    pub fn parse_ascii(reader: impl BufRead, path: &Path) -> Result<Grid> {
        let mut ncols = None;
        let mut nrows = None;
        let mut xll = None;
        let mut yll = None;
        let mut centered = (false, false);
        let mut cellsize = None;
        let mut nodata = DEFAULT_NODATA;
        let mut values = Vec::new();
        let mut lines = reader.lines();
        let mut pending: Option<String> = None;

        // header: keyword/value pairs until the first numeric line
        for line in lines.by_ref() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut it = trimmed.split_whitespace();
            let key = it.next().unwrap_or_default();
            if key.parse::<f64>().is_ok() {
                pending = Some(line);
                break;
            }
            let val = it
                .next()
                .ok_or_else(|| Error::parse(path, format!("missing value for header key `{key}`")))?;
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::parse(path, format!("bad header value `{s}` for `{key}`")))
            };
            match key.to_ascii_lowercase().as_str() {
                "ncols" => ncols = Some(num(val)? as usize),
                "nrows" => nrows = Some(num(val)? as usize),
                "xllcorner" => xll = Some(num(val)?),
                "yllcorner" => yll = Some(num(val)?),
                "xllcenter" => {
                    xll = Some(num(val)?);
                    centered.0 = true;
                }
                "yllcenter" => {
                    yll = Some(num(val)?);
                    centered.1 = true;
                }
                "cellsize" => cellsize = Some(num(val)?),
                "nodata_value" => nodata = num(val)?,
                other => return Err(Error::parse(path, format!("unknown header key `{other}`"))),
            }
        }
        let missing = |k: &str| Error::parse(path, format!("missing header key `{k}`"));
        let ncols = ncols.ok_or_else(|| missing("ncols"))?;
        let nrows = nrows.ok_or_else(|| missing("nrows"))?;
        let cellsize = cellsize.ok_or_else(|| missing("cellsize"))?;
        let mut xll = xll.ok_or_else(|| missing("xllcorner"))?;
        let mut yll = yll.ok_or_else(|| missing("yllcorner"))?;
        if centered.0 {
            xll -= cellsize / 2.0;
        }
        if centered.1 {
            yll -= cellsize / 2.0;
        }

        values.reserve(ncols * nrows);
        let body = pending.into_iter().map(Ok).chain(lines);
        for line in body {
            let line = line?;
            for tok in line.split_whitespace() {
                let v = tok
                    .parse::<f64>()
                    .map_err(|_| Error::parse(path, format!("bad cell value `{tok}`")))?;
                values.push(v);
            }
        }
        if values.len() != ncols * nrows {
            return Err(Error::parse(
                path,
                format!("expected {} cell values, found {}", ncols * nrows, values.len()),
            ));
        }
        Grid::from_values(ncols, nrows, xll, yll, cellsize, nodata, values)
    }

    pub fn write_ascii(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        w.write_all(self.to_ascii_string().as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn to_ascii_string(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 12 + 128);
        let _ = writeln!(s, "ncols         {}", self.ncols);
        let _ = writeln!(s, "nrows         {}", self.nrows);
        let _ = writeln!(s, "xllcorner     {}", fmt_sig9(self.xll));
        let _ = writeln!(s, "yllcorner     {}", fmt_sig9(self.yll));
        let _ = writeln!(s, "cellsize      {}", fmt_sig9(self.cellsize));
        let _ = writeln!(s, "NODATA_value  {}", fmt_sig9(self.nodata));
        for row in self.values.chunks(self.ncols) {
            let mut first = true;
            for &v in row {
                if !first {
                    s.push(' ');
                }
                first = false;
                let v = if self.is_nodata(v) { self.nodata } else { v };
                s.push_str(&fmt_sig9(v));
            }
            s.push('\n');
        }
        s
    }

    /// Grayscale PNG with a linear min–max stretch; nodata is black.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let (lo, hi) = self.min_max().unwrap_or((0.0, 1.0));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let buf: Vec<u8> = self
            .values
            .iter()
            .map(|&v| {
                if self.is_nodata(v) {
                    0
                } else {
                    (1.0 + 254.0 * ((v - lo) / span)).round().clamp(1.0, 255.0) as u8
                }
            })
            .collect();
        let img = image::GrayImage::from_raw(self.ncols as u32, self.nrows as u32, buf)
            .ok_or_else(|| Error::InvalidGrid("image buffer size mismatch".into()))?;
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

/// Formats `x` with 9 significant digits, plain decimal where reasonable.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.8e}", x);
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if (-5..15).contains(&exp) {
        if exp < 0 {
            out.push_str("0.");
            for _ in 0..(-exp - 1) {
                out.push('0');
            }
            out.push_str(digits);
        } else {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                out.push_str(digits);
                for _ in digits.len()..int_len {
                    out.push('0');
                }
            } else {
                out.push_str(&digits[..int_len]);
                out.push('.');
                out.push_str(&digits[int_len..]);
            }
        }
    } else {
        out.push_str(&digits[..1]);
        if digits.len() > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        let _ = write!(out, "e{exp}");
    }
    out
}

/// Named, co-registered bands sharing one geometry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridStack {
    bands: Vec<(String, Grid)>,
}

impl GridStack {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_bands(bands: Vec<(String, Grid)>) -> Result<Self> {
        let mut s = Self::new();
        for (name, g) in bands {
            s.push(name, g)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, name: impl Into<String>, grid: Grid) -> Result<()> {
        let name = name.into();
        if let Some((_, first)) = self.bands.first() {
            if !first.same_geometry(&grid) {
                return Err(Error::GeometryMismatch(format!("band `{name}` is not co-registered")));
            }
        }
        if self.bands.iter().any(|(n, _)| *n == name) {
            return Err(Error::InvalidArgument(format!("duplicate band name `{name}`")));
        }
        self.bands.push((name, grid));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }
    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }
    pub fn names(&self) -> Vec<&str> {
        self.bands.iter().map(|(n, _)| n.as_str()).collect()
    }
    pub fn grids(&self) -> impl Iterator<Item = &Grid> {
        self.bands.iter().map(|(_, g)| g)
    }
    pub fn bands(&self) -> &[(String, Grid)] {
        &self.bands
    }
    pub fn get(&self, name: &str) -> Option<&Grid> {
        self.bands.iter().find(|(n, _)| n == name).map(|(_, g)| g)
    }
    pub fn band(&self, i: usize) -> &Grid {
        &self.bands[i].1
    }
    /// Geometry template (first band).
    pub fn template(&self) -> Option<&Grid> {
        self.bands.first().map(|(_, g)| g)
    }

    /// Values of every band at (row, col); `None` if any band is nodata.
    pub fn cell_vector(&self, row: usize, col: usize) -> Option<Vec<f64>> {
        self.bands.iter().map(|(_, g)| g.get(row, col)).collect()
    }

    pub fn extend(&mut self, other: GridStack) -> Result<()> {
        for (n, g) in other.bands {
            self.push(n, g)?;
        }
        Ok(())
    }

    pub fn prefixed(self, prefix: &str) -> GridStack {
        GridStack {
            bands: self.bands.into_iter().map(|(n, g)| (format!("{prefix}{n}"), g)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(250.0), "250");
        assert_eq!(fmt_sig9(-9999.0), "-9999");
        assert_eq!(fmt_sig9(0.1), "0.1");
        assert_eq!(fmt_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_sig9(123456789012.0), "123456789000");
        assert_eq!(fmt_sig9(1.5e-9), "1.5e-9");
        assert_eq!(fmt_sig9(2.0e20), "2e20");
        assert_eq!(fmt_sig9(-0.000123), "-0.000123");
    }

    #[test]
    fn cell_lookup_and_centers() {
        let g = Grid::new(4, 3, 100.0, 200.0, 10.0, -1.0).unwrap();
        assert_eq!(g.cell_of(Point::new(100.0, 229.9)), Some((0, 0)));
        assert_eq!(g.cell_of(Point::new(139.9, 200.1)), Some((2, 3)));
        assert_eq!(g.cell_of(Point::new(140.0, 205.0)), None);
        assert_eq!(g.cell_of(Point::new(99.9, 205.0)), None);
        assert_eq!(g.cell_center(0, 0), Point::new(105.0, 225.0));
        let (r, c) = g.cell_of(g.cell_center(1, 2)).unwrap();
        assert_eq!((r, c), (1, 2));
    }

    #[test]
    fn ascii_header_variants() {
        let text = "NCOLS 2\nNROWS 2\nXLLCENTER 5\nYLLCENTER 5\nCELLSIZE 10\n1 2\n3 -9999\n";
        let g = Grid::parse_ascii(text.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(g.xll(), 0.0);
        assert_eq!(g.get(1, 1), None);
        assert_eq!(g.get(0, 1), Some(2.0));
        let bad = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n";
        assert!(Grid::parse_ascii(bad.as_bytes(), Path::new("mem")).is_err());
        let no_cs = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\n1\n";
        assert!(Grid::parse_ascii(no_cs.as_bytes(), Path::new("mem")).is_err());
    }

    #[test]
    fn stack_rejects_misregistered_band() {
        let a = Grid::new(2, 2, 0.0, 0.0, 1.0, -1.0).unwrap();
        let b = Grid::new(2, 2, 0.5, 0.0, 1.0, -1.0).unwrap();
        let mut s = GridStack::new();
        s.push("a", a.clone()).unwrap();
        assert!(matches!(s.push("b", b), Err(Error::GeometryMismatch(_))));
        assert!(s.push("a", a).is_err());
    }

    proptest! {
        // Values representable at 9 significant digits survive write→read bit-exactly,
        // and a second write reproduces the first byte-for-byte.
        #[test]
        fn ascii_round_trip(raw in proptest::collection::vec(-1.0e7f64..1.0e7, 12), hole in 0usize..12) {
            let vals: Vec<f64> = raw.iter().map(|v| fmt_sig9(*v).parse::<f64>().unwrap()).collect();
            let mut g = Grid::from_values(4, 3, 1000.5, -20.25, 250.0, -9999.0, vals).unwrap();
            g.values_mut()[hole] = -9999.0;
            let text = g.to_ascii_string();
            let back = Grid::parse_ascii(text.as_bytes(), Path::new("mem")).unwrap();
            for (a, b) in g.values().iter().zip(back.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
            prop_assert_eq!(back.to_ascii_string(), text);
        }
    }
}
