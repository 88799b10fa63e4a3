//! Training-tile grid extraction: pixel centers, square tile footprints,
//! raster sums within footprints, and the AOI/population filter.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, PolygonSet};
use crate::raster::AsciiGridRaster;
use crate::table::{write_table, Cell, Table};

/// Equirectangular meters per degree of latitude.
pub const METERS_PER_DEGREE: f64 = 111_320.0;

pub const DEFAULT_TILE_SIDE_M: f64 = 450.0;
pub const DEFAULT_MIN_POP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileFootprint {
    pub center: GeoPoint,
    pub side_m: f64,
    pub min_lon: f64,
    pub max_lon: f64,
    pub min_lat: f64,
    pub max_lat: f64,
}

/// Square tile of `side_m` meters centered on a point, converted to a
/// degree-space bounding box. The longitude half-width is widened by
/// 1/cos(lat) so the tile keeps its metric width away from the equator.
pub fn tile_footprint(center: GeoPoint, side_m: f64) -> Result<TileFootprint> {
    if !(side_m.is_finite() && side_m > 0.0) {
        return Err(Error::invalid(format!("tile side must be positive, got {side_m}")));
    }
    if !center.lat.is_finite() || !center.lon.is_finite() {
        return Err(Error::invalid("tile center must be finite"));
    }
    if center.lat.abs() >= 89.0 {
        return Err(Error::invalid(format!(
            "latitude {} too close to a pole for square footprints",
            center.lat
        )));
    }
    let half_h = (side_m / 2.0) / METERS_PER_DEGREE;
    let half_w = half_h / center.lat.to_radians().cos();
    Ok(TileFootprint {
        center,
        side_m,
        min_lon: center.lon - half_w,
        max_lon: center.lon + half_w,
        min_lat: center.lat - half_h,
        max_lat: center.lat + half_h,
    })
}

/// Sum of raster values over cells whose centers fall inside the
/// footprint bounds (closed on all sides). Nodata cells contribute 0;
/// an empty intersection sums to 0.
pub fn sum_raster_in_footprint(raster: &AsciiGridRaster, fp: &TileFootprint) -> f64 {
    // Cell-center columns run xll + (col+0.5)*cs; invert to an index window.
    let cs = raster.cellsize;
    let col_lo = ((fp.min_lon - raster.xll) / cs - 0.5).ceil().max(0.0) as usize;
    let col_hi_f = (fp.max_lon - raster.xll) / cs - 0.5;
    if col_hi_f < 0.0 || col_lo >= raster.ncols {
        return 0.0;
    }
    let col_hi = (col_hi_f.floor() as usize).min(raster.ncols - 1);

    // Row 0 is northernmost: lat = yll + (nrows - row - 0.5)*cs.
    let nrows = raster.nrows as f64;
    let row_lo_f = nrows - 0.5 - (fp.max_lat - raster.yll) / cs;
    let row_hi_f = nrows - 0.5 - (fp.min_lat - raster.yll) / cs;
    let row_lo = row_lo_f.ceil().max(0.0) as usize;
    if row_hi_f < 0.0 || row_lo >= raster.nrows {
        return 0.0;
    }
    let row_hi = (row_hi_f.floor() as usize).min(raster.nrows - 1);

    let mut sum = 0.0;
    for row in row_lo..=row_hi {
        for col in col_lo..=col_hi {
            let v = raster.values[row * raster.ncols + col];
            if !raster.is_nodata(v) {
                sum += v;
            }
        }
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidRecord {
    pub row: usize,
    pub col: usize,
    pub center: GeoPoint,
    pub footprint: TileFootprint,
    /// Population summed over the footprint.
    pub population: f64,
    pub nightlight_sum: f64,
    pub night_class: Option<u8>,
}

#[derive(Debug, Clone, Copy)]
pub struct ExtractOptions {
    pub side_m: f64,
    pub min_pop: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { side_m: DEFAULT_TILE_SIDE_M, min_pop: DEFAULT_MIN_POP }
    }
}

/// One record per VNL pixel whose center lies inside the AOI and whose
/// footprint population reaches `min_pop`. Records are sorted by
/// (row, col) regardless of evaluation order.
pub fn extract_centroids(
    vnl: &AsciiGridRaster,
    worldpop: &AsciiGridRaster,
    aois: &PolygonSet,
    opts: &ExtractOptions,
) -> Result<Vec<CentroidRecord>> {
    if aois.is_empty() {
        return Err(Error::invalid("at least one AOI polygon required"));
    }
    let pixels: Vec<(usize, usize)> = (0..vnl.nrows)
        .flat_map(|row| (0..vnl.ncols).map(move |col| (row, col)))
        .collect();
    let mut records = pixels
        .par_iter()
        .map(|&(row, col)| -> Result<Option<CentroidRecord>> {
            let (lon, lat) = vnl.pixel_center(row, col)?;
            let center = GeoPoint::new(lon, lat);
            if !aois.contains(center) {
                return Ok(None);
            }
            let footprint = tile_footprint(center, opts.side_m)?;
            let population = sum_raster_in_footprint(worldpop, &footprint);
            if population < opts.min_pop {
                return Ok(None);
            }
            let nightlight_sum = sum_raster_in_footprint(vnl, &footprint);
            Ok(Some(CentroidRecord {
                row,
                col,
                center,
                footprint,
                population,
                nightlight_sum,
                night_class: None,
            }))
        })
        .collect::<Result<Vec<Option<CentroidRecord>>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<CentroidRecord>>();
    records.sort_by_key(|r| (r.row, r.col));
    Ok(records)
}

/// Serialize centroid records. The `night_class` column appears only
/// when at least one record carries a class.
pub fn write_centroid_table(records: &[CentroidRecord]) -> Result<String> {
    let with_class = records.iter().any(|r| r.night_class.is_some());
    let mut columns = vec!["row", "col", "lon", "lat", "population", "nightlight_sum"];
    if with_class {
        columns.push("night_class");
    }
    let rows: Vec<Vec<Cell>> = records
        .iter()
        .map(|r| {
            let mut row = vec![
                Cell::from(r.row),
                Cell::from(r.col),
                Cell::from(r.center.lon),
                Cell::from(r.center.lat),
                Cell::from(r.population),
                Cell::from(r.nightlight_sum),
            ];
            if with_class {
                row.push(Cell::from(i64::from(r.night_class.unwrap_or(0))));
            }
            row
        })
        .collect();
    write_table(&columns, &rows)
}

/// Parse a centroid table back into records, recomputing footprints.
pub fn parse_centroid_table(text: &str, side_m: f64) -> Result<Vec<CentroidRecord>> {
    let t = Table::parse(text)?;
    let c_row = t.column("row")?;
    let c_col = t.column("col")?;
    let c_lon = t.column("lon")?;
    let c_lat = t.column("lat")?;
    let c_pop = t.column("population")?;
    let c_nl = t.column("nightlight_sum")?;
    let c_class = t.column("night_class").ok();
    let mut records = Vec::with_capacity(t.len());
    for i in 0..t.len() {
        let center = GeoPoint::new(t.f64_at(i, c_lon)?, t.f64_at(i, c_lat)?);
        let night_class = match c_class {
            Some(c) => {
                let v = t.i64_at(i, c)?;
                let class = u8::try_from(v).ok().filter(|&c| c <= 2).ok_or_else(|| {
                    Error::parse(t.line_of(i), format!("night_class must be 0, 1, or 2, found {v}"))
                })?;
                Some(class)
            }
            None => None,
        };
        records.push(CentroidRecord {
            row: t.usize_at(i, c_row)?,
            col: t.usize_at(i, c_col)?,
            center,
            footprint: tile_footprint(center, side_m)?,
            population: t.f64_at(i, c_pop)?,
            nightlight_sum: t.f64_at(i, c_nl)?,
            night_class,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(ncols: usize, nrows: usize, values: Vec<f64>) -> AsciiGridRaster {
        AsciiGridRaster::new(ncols, nrows, 0.0, 0.0, 1.0, -9999.0, values).unwrap()
    }

    #[test]
    fn footprint_at_equator() {
        let fp = tile_footprint(GeoPoint::new(0.0, 0.0), 450.0).unwrap();
        let half = 225.0 / METERS_PER_DEGREE;
        assert!((fp.max_lat - half).abs() < 1e-12);
        assert!((fp.min_lat + half).abs() < 1e-12);
        // cos(0) = 1: width equals height at the equator.
        assert!((fp.max_lon - half).abs() < 1e-12);
    }

    #[test]
    fn footprint_widens_away_from_equator() {
        let fp = tile_footprint(GeoPoint::new(121.0, 14.0), 450.0).unwrap();
        let half_h = 225.0 / METERS_PER_DEGREE;
        let half_w = half_h / 14.0_f64.to_radians().cos();
        assert!((fp.max_lon - fp.min_lon - 2.0 * half_w).abs() < 1e-12);
        assert!((fp.max_lat - fp.min_lat - 2.0 * half_h).abs() < 1e-12);
        assert!(fp.max_lon - fp.min_lon > fp.max_lat - fp.min_lat);
    }

    #[test]
    fn footprint_rejects_degenerate_and_polar() {
        assert!(tile_footprint(GeoPoint::new(0.0, 0.0), 0.0).is_err());
        assert!(tile_footprint(GeoPoint::new(0.0, 0.0), -1.0).is_err());
        assert!(tile_footprint(GeoPoint::new(0.0, 89.5), 450.0).is_err());
        assert!(tile_footprint(GeoPoint::new(0.0, -90.0), 450.0).is_err());
    }

    #[test]
    fn sum_single_cell() {
        let r = raster(1, 1, vec![7.0]);
        let fp = TileFootprint {
            center: GeoPoint::new(0.5, 0.5),
            side_m: 1.0,
            min_lon: 0.2,
            max_lon: 0.8,
            min_lat: 0.2,
            max_lat: 0.8,
        };
        assert_eq!(sum_raster_in_footprint(&r, &fp), 7.0);
    }

    #[test]
    fn sum_outside_raster_is_zero() {
        let r = raster(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let fp = TileFootprint {
            center: GeoPoint::new(10.0, 10.0),
            side_m: 1.0,
            min_lon: 9.0,
            max_lon: 11.0,
            min_lat: 9.0,
            max_lat: 11.0,
        };
        assert_eq!(sum_raster_in_footprint(&r, &fp), 0.0);
        let below = TileFootprint { min_lon: -5.0, max_lon: -4.0, ..fp };
        assert_eq!(sum_raster_in_footprint(&r, &below), 0.0);
    }

    #[test]
    fn sum_matches_exhaustive_cell_check() {
        // 4x4 grid, values 1..=16 reading north to south.
        let values: Vec<f64> = (1..=16).map(f64::from).collect();
        let r = raster(4, 4, values);
        let fp = TileFootprint {
            center: GeoPoint::new(2.0, 2.0),
            side_m: 1.0,
            min_lon: 1.0,
            max_lon: 3.0,
            min_lat: 1.0,
            max_lat: 3.0,
        };
        let fast = sum_raster_in_footprint(&r, &fp);
        let mut slow = 0.0;
        for row in 0..4 {
            for col in 0..4 {
                let (lon, lat) = r.pixel_center(row, col).unwrap();
                if lon >= fp.min_lon
                    && lon <= fp.max_lon
                    && lat >= fp.min_lat
                    && lat <= fp.max_lat
                {
                    slow += r.get(row, col).unwrap();
                }
            }
        }
        assert_eq!(fast, slow);
        // Centers at 1.5 and 2.5 in both axes: rows 1..=2, cols 1..=2.
        assert_eq!(fast, 6.0 + 7.0 + 10.0 + 11.0);
    }

    #[test]
    fn nodata_contributes_zero() {
        let r = raster(2, 1, vec![5.0, -9999.0]);
        let fp = TileFootprint {
            center: GeoPoint::new(1.0, 0.5),
            side_m: 1.0,
            min_lon: 0.0,
            max_lon: 2.0,
            min_lat: 0.0,
            max_lat: 1.0,
        };
        assert_eq!(sum_raster_in_footprint(&r, &fp), 5.0);
    }

    fn degree_scale_fixture() -> (AsciiGridRaster, AsciiGridRaster) {
        // 2x2 rasters with 1-degree cells; footprints of 450 m cover
        // exactly the one cell each center sits in.
        let vnl = raster(2, 2, vec![10.0, 20.0, 30.0, 40.0]);
        let pop = raster(2, 2, vec![0.0, 1.0, 2.0, 5.0]);
        (vnl, pop)
    }

    #[test]
    fn extract_filters_by_population() {
        let (vnl, pop) = degree_scale_fixture();
        let aoi = PolygonSet::parse("0 0 2 0 2 2 0 2\n").unwrap();
        let recs = extract_centroids(&vnl, &pop, &aoi, &ExtractOptions::default()).unwrap();
        // Footprint pops are {0,1,2,5}; min_pop 2 keeps the south row.
        assert_eq!(recs.len(), 2);
        assert_eq!((recs[0].row, recs[0].col), (1, 0));
        assert_eq!((recs[1].row, recs[1].col), (1, 1));
        assert_eq!(recs[0].population, 2.0);
        assert_eq!(recs[0].nightlight_sum, 30.0);
        assert_eq!(recs[1].population, 5.0);
        assert_eq!(recs[1].nightlight_sum, 40.0);
    }

    #[test]
    fn extract_min_pop_zero_keeps_all_in_aoi() {
        let (vnl, pop) = degree_scale_fixture();
        let aoi = PolygonSet::parse("0 0 2 0 2 2 0 2\n").unwrap();
        let opts = ExtractOptions { min_pop: 0.0, ..ExtractOptions::default() };
        let recs = extract_centroids(&vnl, &pop, &aoi, &opts).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.windows(2).all(|w| (w[0].row, w[0].col) < (w[1].row, w[1].col)));
    }

    #[test]
    fn extract_empty_aoi_coverage_gives_empty_list() {
        let (vnl, pop) = degree_scale_fixture();
        let aoi = PolygonSet::parse("10 10 11 10 11 11 10 11\n").unwrap();
        let recs = extract_centroids(&vnl, &pop, &aoi, &ExtractOptions::default()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn centroid_table_round_trip() {
        let (vnl, pop) = degree_scale_fixture();
        let aoi = PolygonSet::parse("0 0 2 0 2 2 0 2\n").unwrap();
        let mut recs = extract_centroids(&vnl, &pop, &aoi, &ExtractOptions::default()).unwrap();
        recs[0].night_class = Some(1);
        recs[1].night_class = Some(2);
        let text = write_centroid_table(&recs).unwrap();
        let back = parse_centroid_table(&text, 450.0).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].night_class, Some(1));
        assert_eq!(back[1].night_class, Some(2));
        assert_eq!(back[0].row, recs[0].row);
        assert_eq!(back[0].population, recs[0].population);
    }
}
