//! ESRI ASCII grid rasters.
//!
//! Values are stored row-major with row 0 the northernmost row. The
//! lower-left origin is normalized to corner registration on parse:
//! `xllcenter`/`yllcenter` headers are converted by subtracting half a
//! cell, and files are always written back in corner form.

use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AsciiGridRaster {
    pub ncols: usize,
    pub nrows: usize,
    /// Longitude of the lower-left corner.
    pub xll: f64,
    /// Latitude of the lower-left corner.
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
    /// Row-major, row 0 = northernmost.
    pub values: Vec<f64>,
}

impl AsciiGridRaster {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xll: f64,
        yll: f64,
        cellsize: f64,
        nodata: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::invalid("raster dimensions must be positive"));
        }
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(Error::invalid("cellsize must be positive and finite"));
        }
        if values.len() != ncols * nrows {
            return Err(Error::invalid(format!(
                "raster has {} values, expected {}",
                values.len(),
                ncols * nrows
            )));
        }
        Ok(AsciiGridRaster { ncols, nrows, xll, yll, cellsize, nodata, values })
    }

    /// Parse the ESRI ASCII grid format: header lines `key value`, then
    /// one whitespace-separated line of `ncols` values per row, north first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut ncols: Option<usize> = None;
        let mut nrows: Option<usize> = None;
        let mut xll: Option<(f64, bool)> = None;
        let mut yll: Option<(f64, bool)> = None;
        let mut cellsize: Option<f64> = None;
        let mut nodata = DEFAULT_NODATA;

        let mut lines = text.split('\n').enumerate().peekable();
        while let Some(&(i, raw)) = lines.peek() {
            let line = raw.trim();
            if line.is_empty() {
                lines.next();
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or("").to_ascii_lowercase();
            let known = matches!(
                key.as_str(),
                "ncols" | "nrows" | "xllcorner" | "xllcenter" | "yllcorner" | "yllcenter"
                    | "cellsize" | "nodata_value"
            );
            if !known {
                break;
            }
            lines.next();
            let lineno = i + 1;
            let value = parts
                .next()
                .ok_or_else(|| Error::parse(lineno, format!("header `{key}` missing value")))?;
            if parts.next().is_some() {
                return Err(Error::parse(lineno, format!("header `{key}` has extra tokens")));
            }
            match key.as_str() {
                "ncols" => ncols = Some(parse_dim(lineno, "ncols", value)?),
                "nrows" => nrows = Some(parse_dim(lineno, "nrows", value)?),
                "xllcorner" => xll = Some((parse_num(lineno, "xllcorner", value)?, false)),
                "xllcenter" => xll = Some((parse_num(lineno, "xllcenter", value)?, true)),
                "yllcorner" => yll = Some((parse_num(lineno, "yllcorner", value)?, false)),
                "yllcenter" => yll = Some((parse_num(lineno, "yllcenter", value)?, true)),
                "cellsize" => cellsize = Some(parse_num(lineno, "cellsize", value)?),
                "nodata_value" => nodata = parse_num(lineno, "nodata_value", value)?,
                _ => unreachable!(),
            }
        }

        let ncols = ncols.ok_or_else(|| Error::parse(1, "missing header `ncols`"))?;
        let nrows = nrows.ok_or_else(|| Error::parse(1, "missing header `nrows`"))?;
        let (mut xll, x_center) =
            xll.ok_or_else(|| Error::parse(1, "missing header `xllcorner` or `xllcenter`"))?;
        let (mut yll, y_center) =
            yll.ok_or_else(|| Error::parse(1, "missing header `yllcorner` or `yllcenter`"))?;
        let cellsize =
            cellsize.ok_or_else(|| Error::parse(1, "missing header `cellsize`"))?;
        if !(cellsize.is_finite() && cellsize > 0.0) {
            return Err(Error::invalid("cellsize must be positive and finite"));
        }
        if x_center {
            xll -= cellsize / 2.0;
        }
        if y_center {
            yll -= cellsize / 2.0;
        }

        let mut values = Vec::with_capacity(ncols * nrows);
        let mut data_rows = 0usize;
        for (i, raw) in lines {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if data_rows == nrows {
                return Err(Error::parse(i + 1, format!("more than {nrows} data rows")));
            }
            let mut count = 0usize;
            for tok in line.split_whitespace() {
                let v = tok.parse::<f64>().map_err(|_| {
                    Error::parse(i + 1, format!("expected number, found `{tok}`"))
                })?;
                values.push(v);
                count += 1;
            }
            if count != ncols {
                return Err(Error::parse(
                    i + 1,
                    format!("expected {ncols} values in row, found {count}"),
                ));
            }
            data_rows += 1;
        }
        if data_rows != nrows {
            return Err(Error::invalid(format!(
                "raster has {data_rows} data rows, header says {nrows}"
            )));
        }
        AsciiGridRaster::new(ncols, nrows, xll, yll, cellsize, nodata, values)
    }

    /// Serialize in corner form. Values print with shortest round-trip
    /// precision, so `parse(write(r)) == r` exactly.
    pub fn write(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("ncols {}\n", self.ncols));
        out.push_str(&format!("nrows {}\n", self.nrows));
        out.push_str(&format!("xllcorner {}\n", self.xll));
        out.push_str(&format!("yllcorner {}\n", self.yll));
        out.push_str(&format!("cellsize {}\n", self.cellsize));
        out.push_str(&format!("NODATA_value {}\n", self.nodata));
        for row in 0..self.nrows {
            let start = row * self.ncols;
            let rendered: Vec<String> = self.values[start..start + self.ncols]
                .iter()
                .map(|v| format!("{v}"))
                .collect();
            out.push_str(&rendered.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn get(&self, row: usize, col: usize) -> Result<f64> {
        if row >= self.nrows || col >= self.ncols {
            return Err(Error::invalid(format!(
                "pixel ({row}, {col}) out of bounds for {}x{} raster",
                self.nrows, self.ncols
            )));
        }
        Ok(self.values[row * self.ncols + col])
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata
    }

    /// Geographic center of a pixel. Row 0 is the northernmost row, so
    /// latitude decreases with the row index.
    pub fn pixel_center(&self, row: usize, col: usize) -> Result<(f64, f64)> {
        if row >= self.nrows || col >= self.ncols {
            return Err(Error::invalid(format!(
                "pixel ({row}, {col}) out of bounds for {}x{} raster",
                self.nrows, self.ncols
            )));
        }
        let lon = self.xll + (col as f64 + 0.5) * self.cellsize;
        let lat = self.yll + (self.nrows as f64 - row as f64 - 0.5) * self.cellsize;
        Ok((lon, lat))
    }
}

fn parse_dim(line: usize, key: &str, value: &str) -> Result<usize> {
    let v: i64 = value
        .parse()
        .map_err(|_| Error::parse(line, format!("header `{key}`: expected integer, found `{value}`")))?;
    if v <= 0 {
        return Err(Error::parse(line, format!("header `{key}` must be positive, found {v}")));
    }
    Ok(v as usize)
}

fn parse_num(line: usize, key: &str, value: &str) -> Result<f64> {
    value
        .parse()
        .map_err(|_| Error::parse(line, format!("header `{key}`: expected number, found `{value}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "ncols 3\nnrows 2\nxllcorner 120.0\nyllcorner 14.0\ncellsize 0.5\nNODATA_value -9999\n1 2 3\n4 5 -9999\n";

    #[test]
    fn parses_corner_registered_grid() {
        let r = AsciiGridRaster::parse(SMALL).unwrap();
        assert_eq!(r.ncols, 3);
        assert_eq!(r.nrows, 2);
        assert_eq!(r.xll, 120.0);
        assert_eq!(r.yll, 14.0);
        assert_eq!(r.cellsize, 0.5);
        assert_eq!(r.nodata, -9999.0);
        assert_eq!(r.values, vec![1.0, 2.0, 3.0, 4.0, 5.0, -9999.0]);
        assert!(r.is_nodata(r.get(1, 2).unwrap()));
    }

    #[test]
    fn center_registration_shifts_origin_half_cell() {
        let text = "ncols 2\nnrows 2\nxllcenter 0.25\nyllcenter 10.25\ncellsize 0.5\n1 2\n3 4\n";
        let r = AsciiGridRaster::parse(text).unwrap();
        assert_eq!(r.xll, 0.0);
        assert_eq!(r.yll, 10.0);
        assert_eq!(r.nodata, DEFAULT_NODATA);
    }

    #[test]
    fn pixel_centers_run_north_to_south() {
        let r = AsciiGridRaster::parse(SMALL).unwrap();
        // Top-left pixel sits half a cell in from the upper-left corner.
        assert_eq!(r.pixel_center(0, 0).unwrap(), (120.25, 14.75));
        assert_eq!(r.pixel_center(1, 2).unwrap(), (121.25, 14.25));
        assert!(r.pixel_center(2, 0).is_err());
    }

    #[test]
    fn write_parse_identity() {
        let r = AsciiGridRaster::parse(SMALL).unwrap();
        let round = AsciiGridRaster::parse(&r.write()).unwrap();
        assert_eq!(r, round);
    }

    #[test]
    fn missing_header_is_parse_error() {
        let text = "ncols 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n";
        let err = AsciiGridRaster::parse(text).unwrap_err();
        assert!(err.to_string().contains("nrows"), "{err}");
    }

    #[test]
    fn short_row_is_parse_error() {
        let text = "ncols 3\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n";
        let err = AsciiGridRaster::parse(text).unwrap_err();
        assert!(err.to_string().contains("expected 3"), "{err}");
    }

    #[test]
    fn row_count_mismatch_is_error() {
        let text = "ncols 2\nnrows 3\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n3 4\n";
        let err = AsciiGridRaster::parse(text).unwrap_err();
        assert!(err.to_string().contains("2 data rows"), "{err}");
    }
}
