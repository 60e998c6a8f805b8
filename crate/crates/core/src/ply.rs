//! Minimal polygon-file (PLY) support for voxelized clouds.
//!
//! Reads ASCII and binary PLY. Only the `x`, `y`, `z` properties of the
//! `vertex` element are used; every other element and property is skipped.
//! Coordinates must be non-negative integers (float properties are accepted
//! only when they hold integral values). Clouds are written as ASCII with
//! `int` coordinates.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::cloud::{check_resolution, Voxel, VoxelPointCloud};
use crate::error::{Error, Result};

/// Loads a cloud at `resolution_bits`, rejecting coordinates outside `[0, 2^r)`.
pub fn load_voxelized_cloud(path: impl AsRef<Path>, resolution_bits: u32) -> Result<VoxelPointCloud> {
    check_resolution(resolution_bits)?;
    let points = read_points(path.as_ref(), Some(resolution_bits))?;
    VoxelPointCloud::new(resolution_bits, points)
}

/// Reads the vertex coordinates without a resolution bound (duplicates kept).
pub fn load_points(path: impl AsRef<Path>) -> Result<Vec<Voxel>> {
    read_points(path.as_ref(), None)
}

pub fn save_voxelized_cloud(cloud: &VoxelPointCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_cloud(cloud, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_cloud(cloud: &VoxelPointCloud, w: &mut impl Write) -> Result<()> {
    write!(
        w,
        "ply\nformat ascii 1.0\ncomment resolution_bits {}\nelement vertex {}\n\
         property int x\nproperty int y\nproperty int z\nend_header\n",
        cloud.resolution_bits(),
        cloud.len()
    )?;
    for [x, y, z] in cloud.points() {
        writeln!(w, "{x} {y} {z}")?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Ascii,
    BinaryLittle,
    BinaryBig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn decode(self, bytes: &[u8], format: Format) -> f64 {
        macro_rules! num {
            ($t:ty) => {{
                let arr: [u8; std::mem::size_of::<$t>()] = bytes.try_into().unwrap();
                if format == Format::BinaryBig {
                    <$t>::from_be_bytes(arr) as f64
                } else {
                    <$t>::from_le_bytes(arr) as f64
                }
            }};
        }
        match self {
            Self::I8 => num!(i8),
            Self::U8 => num!(u8),
            Self::I16 => num!(i16),
            Self::U16 => num!(u16),
            Self::I32 => num!(i32),
            Self::U32 => num!(u32),
            Self::F32 => num!(f32),
            Self::F64 => num!(f64),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<(String, Property)>,
}

struct Reader<'p> {
    path: &'p Path,
    line: usize,
}

impl Reader<'_> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::Ply {
            path: self.path.to_path_buf(),
            line: self.line,
            message: message.into(),
        }
    }
}

fn read_points(path: &Path, bits: Option<u32>) -> Result<Vec<Voxel>> {
    let mut input = BufReader::new(File::open(path)?);
    let mut rd = Reader { path, line: 0 };
    let (format, elements) = read_header(&mut input, &mut rd)?;

    let mut points = Vec::new();
    for element in &elements {
        let axes = if element.name == "vertex" {
            let find = |axis: &str| {
                element
                    .properties
                    .iter()
                    .position(|(name, p)| name == axis && matches!(p, Property::Scalar(_)))
            };
            match (find("x"), find("y"), find("z")) {
                (Some(x), Some(y), Some(z)) => Some([x, y, z]),
                _ => return Err(rd.err("vertex element lacks scalar x/y/z properties")),
            }
        } else {
            None
        };
        if axes.is_some() {
            points.reserve(element.count);
        }
        for index in 0..element.count {
            let values = match format {
                Format::Ascii => read_ascii_instance(&mut input, &mut rd, element)?,
                _ => {
                    rd.line = index;
                    read_binary_instance(&mut input, &rd, element, format)?
                }
            };
            if let Some(axes) = axes {
                points.push(to_voxel(&rd, format, index, axes.map(|a| values[a]), bits)?);
            }
        }
    }
    Ok(points)
}

fn read_header(input: &mut impl BufRead, rd: &mut Reader<'_>) -> Result<(Format, Vec<Element>)> {
    let mut line = String::new();
    let next_line = |input: &mut dyn BufRead, rd: &mut Reader<'_>, line: &mut String| -> Result<bool> {
        line.clear();
        rd.line += 1;
        Ok(input.read_line(line)? > 0)
    };

    if !next_line(input, rd, &mut line)? || line.trim_end() != "ply" {
        return Err(rd.err("missing 'ply' magic line"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if !next_line(input, rd, &mut line)? {
            return Err(rd.err("unexpected end of file inside header"));
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["format", kind, _version] => {
                format = Some(match *kind {
                    "ascii" => Format::Ascii,
                    "binary_little_endian" => Format::BinaryLittle,
                    "binary_big_endian" => Format::BinaryBig,
                    other => return Err(rd.err(format!("unknown format '{other}'"))),
                });
            }
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| rd.err(format!("bad element count '{count}'")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            ["property", "list", count, item, name] => {
                let count = Scalar::parse(count).ok_or_else(|| rd.err(format!("unknown type '{count}'")))?;
                let item = Scalar::parse(item).ok_or_else(|| rd.err(format!("unknown type '{item}'")))?;
                let el = elements
                    .last_mut()
                    .ok_or_else(|| rd.err("property before any element"))?;
                el.properties.push((name.to_string(), Property::List { count, item }));
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| rd.err(format!("unknown type '{ty}'")))?;
                let el = elements
                    .last_mut()
                    .ok_or_else(|| rd.err("property before any element"))?;
                el.properties.push((name.to_string(), Property::Scalar(ty)));
            }
            _ => return Err(rd.err(format!("unrecognized header line '{}'", line.trim_end()))),
        }
    }
    let format = format.ok_or_else(|| rd.err("header has no format line"))?;
    Ok((format, elements))
}

/// Returns one value per property (lists yield NaN placeholders).
fn read_ascii_instance(input: &mut impl BufRead, rd: &mut Reader<'_>, element: &Element) -> Result<Vec<f64>> {
    let mut line = String::new();
    rd.line += 1;
    if input.read_line(&mut line)? == 0 {
        return Err(rd.err(format!("unexpected end of file in '{}' data", element.name)));
    }
    let mut tokens = line.split_whitespace();
    let mut next = |what: &str| -> Result<f64> {
        let tok = tokens
            .next()
            .ok_or_else(|| rd.err(format!("missing value for '{what}'")))?;
        tok.parse::<f64>()
            .map_err(|_| rd.err(format!("cannot parse '{tok}' as a number")))
    };
    let mut values = Vec::with_capacity(element.properties.len());
    for (name, prop) in &element.properties {
        match prop {
            Property::Scalar(_) => values.push(next(name)?),
            Property::List { .. } => {
                let n = next(name)?;
                for _ in 0..n as usize {
                    next(name)?;
                }
                values.push(f64::NAN);
            }
        }
    }
    Ok(values)
}

fn read_binary_instance(input: &mut impl Read, rd: &Reader<'_>, element: &Element, format: Format) -> Result<Vec<f64>> {
    let mut buf = [0u8; 8];
    let mut read_scalar = |input: &mut dyn Read, ty: Scalar| -> Result<f64> {
        let bytes = &mut buf[..ty.size()];
        input.read_exact(bytes).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => rd.err(format!(
                "unexpected end of file in '{}' element {}",
                element.name, rd.line
            )),
            _ => Error::Io(e),
        })?;
        Ok(ty.decode(bytes, format))
    };
    let mut values = Vec::with_capacity(element.properties.len());
    for (_, prop) in &element.properties {
        match *prop {
            Property::Scalar(ty) => values.push(read_scalar(input, ty)?),
            Property::List { count, item } => {
                let n = read_scalar(input, count)?;
                for _ in 0..n as usize {
                    read_scalar(input, item)?;
                }
                values.push(f64::NAN);
            }
        }
    }
    Ok(values)
}

fn to_voxel(rd: &Reader<'_>, format: Format, index: usize, xyz: [f64; 3], bits: Option<u32>) -> Result<Voxel> {
    let location = || match format {
        Format::Ascii => format!("vertex {index}"),
        _ => format!("binary vertex {index}"),
    };
    if xyz.iter().any(|v| !v.is_finite() || v.fract() != 0.0) {
        return Err(rd.err(format!("{}: non-integer coordinate {xyz:?}", location())));
    }
    let coord = xyz.map(|v| v as i64);
    let limit = bits.map_or(1i64 << 32, |b| 1i64 << b);
    if coord.iter().any(|&c| c < 0 || c >= limit) {
        let message = match bits {
            Some(b) => format!("{}: coordinate {coord:?} outside [0, 2^{b})", location()),
            None => format!("{}: coordinate {coord:?} is negative or too large", location()),
        };
        return Err(rd.err(message));
    }
    Ok(coord.map(|c| c as u32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use std::path::PathBuf;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    const ASCII_HEADER: &str =
        "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n";

    #[test]
    fn reads_ascii_vertices() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "a.ply", format!("{ASCII_HEADER}0 0 0\n1 2 3\n").as_bytes());
        let c = load_voxelized_cloud(&p, 2).unwrap();
        assert_eq!(c.points(), &[[0, 0, 0], [1, 2, 3]]);
    }

    #[test]
    fn duplicate_vertices_collapse() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "d.ply", format!("{ASCII_HEADER}1 2 3\n1 2 3\n").as_bytes());
        assert_eq!(load_voxelized_cloud(&p, 2).unwrap().len(), 1);
    }

    #[test]
    fn out_of_range_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "o.ply", format!("{ASCII_HEADER}0 0 0\n4 0 0\n").as_bytes());
        match load_voxelized_cloud(&p, 2).unwrap_err() {
            Error::Ply { line, message, .. } => {
                assert_eq!(line, 9);
                assert!(message.contains("[4, 0, 0]"), "{message}");
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn rejects_fractional_and_negative() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "f.ply", format!("{ASCII_HEADER}0.5 0 0\n1 1 1\n").as_bytes());
        assert!(matches!(load_voxelized_cloud(&p, 4), Err(Error::Ply { line: 8, .. })));
        let p = write_tmp(&dir, "n.ply", format!("{ASCII_HEADER}0 0 0\n-1 1 1\n").as_bytes());
        assert!(load_voxelized_cloud(&p, 4).is_err());
    }

    #[test]
    fn skips_other_elements_and_properties() {
        let dir = tempfile::tempdir().unwrap();
        let text = "ply\nformat ascii 1.0\ncomment x\nelement vertex 2\nproperty uchar red\nproperty int x\n\
                    property int y\nproperty int z\nproperty list uchar int idx\nelement face 1\n\
                    property list uchar int vertex_indices\nend_header\n\
                    255 1 1 1 2 7 8\n0 2 3 1 0\n3 0 1 1\n";
        let p = write_tmp(&dir, "s.ply", text.as_bytes());
        let c = load_voxelized_cloud(&p, 2).unwrap();
        assert_eq!(c.points(), &[[1, 1, 1], [2, 3, 1]]);
    }

    #[test]
    fn reads_binary_little_and_big_endian() {
        let dir = tempfile::tempdir().unwrap();
        for (fmt, big) in [("binary_little_endian", false), ("binary_big_endian", true)] {
            let mut bytes = format!(
                "ply\nformat {fmt} 1.0\nelement vertex 2\nproperty short x\nproperty float y\n\
                 property uint z\nproperty uchar alpha\nend_header\n"
            )
            .into_bytes();
            for (x, y, z) in [(5i16, 6.0f32, 7u32), (1, 0.0, 2)] {
                if big {
                    bytes.extend(x.to_be_bytes());
                    bytes.extend(y.to_be_bytes());
                    bytes.extend(z.to_be_bytes());
                } else {
                    bytes.extend(x.to_le_bytes());
                    bytes.extend(y.to_le_bytes());
                    bytes.extend(z.to_le_bytes());
                }
                bytes.push(9);
            }
            let p = write_tmp(&dir, "b.ply", &bytes);
            let c = load_voxelized_cloud(&p, 3).unwrap();
            assert_eq!(c.points(), &[[1, 0, 2], [5, 6, 7]]);
        }
    }

    #[test]
    fn truncated_body_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "t.ply", format!("{ASCII_HEADER}0 0 0\n").as_bytes());
        assert!(load_voxelized_cloud(&p, 2).is_err());
        let p = write_tmp(&dir, "h.ply", b"ply\nformat ascii 1.0\nelement vertex 1\n");
        assert!(load_voxelized_cloud(&p, 2).is_err());
        let p = write_tmp(&dir, "m.ply", b"plx\n");
        assert!(load_voxelized_cloud(&p, 2).is_err());
    }

    #[test]
    fn empty_cloud_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.ply");
        let c = VoxelPointCloud::empty(4).unwrap();
        save_voxelized_cloud(&c, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.contains("element vertex 0"));
        assert_eq!(load_voxelized_cloud(&p, 4).unwrap(), c);
    }

    #[test]
    fn load_points_without_bound() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "u.ply", format!("{ASCII_HEADER}700 0 0\n3 3 3\n").as_bytes());
        assert_eq!(load_points(&p).unwrap(), vec![[700, 0, 0], [3, 3, 3]]);
    }
}
