//! Netpbm PGM reading and writing (P2 ASCII and P5 binary, maxval 255).

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::GrayImage;

struct Header {
    binary: bool,
    width: usize,
    height: usize,
    /// Offset of the first payload byte.
    data_start: usize,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.data.len() {
            match self.data[self.pos] {
                b'#' => {
                    while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    /// Reads an unsigned decimal token. `None` at end of input.
    fn read_number(&mut self) -> Option<std::result::Result<u32, String>> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
            if self.data[self.pos] == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return None;
        }
        let token = String::from_utf8_lossy(&self.data[start..self.pos]);
        Some(token.parse::<u32>().map_err(|_| token.into_owned()))
    }
}

fn parse_header(data: &[u8]) -> Result<Header> {
    if data.len() < 2 {
        return Err(Error::UnsupportedMagic(
            String::from_utf8_lossy(data).into_owned(),
        ));
    }
    let binary = match &data[..2] {
        b"P5" => true,
        b"P2" => false,
        other => {
            return Err(Error::UnsupportedMagic(
                String::from_utf8_lossy(other).into_owned(),
            ))
        }
    };
    let mut cur = Cursor { data, pos: 2 };
    let mut field = |name: &str| -> Result<u32> {
        match cur.read_number() {
            None => Err(Error::MalformedHeader(format!("missing {name}"))),
            Some(Err(tok)) => Err(Error::MalformedHeader(format!("bad {name} {tok:?}"))),
            Some(Ok(v)) => Ok(v),
        }
    };
    let width = field("width")? as usize;
    let height = field("height")? as usize;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    let mut data_start = cur.pos;
    if data_start < data.len() {
        if !data[data_start].is_ascii_whitespace() {
            return Err(Error::MalformedHeader(
                "missing whitespace after maxval".into(),
            ));
        }
        data_start += 1;
    }
    Ok(Header {
        binary,
        width,
        height,
        data_start,
    })
}

/// Decodes an in-memory PGM file.
pub fn decode_pgm(data: &[u8]) -> Result<GrayImage> {
    let header = parse_header(data)?;
    let expected = header.width * header.height;
    let payload = &data[header.data_start.min(data.len())..];
    let pixels = if header.binary {
        if payload.len() < expected {
            return Err(Error::TruncatedPayload {
                expected,
                found: payload.len(),
            });
        }
        payload[..expected].to_vec()
    } else {
        let mut cur = Cursor {
            data: payload,
            pos: 0,
        };
        let mut pixels = Vec::with_capacity(expected);
        while pixels.len() < expected {
            match cur.read_number() {
                None => {
                    return Err(Error::TruncatedPayload {
                        expected,
                        found: pixels.len(),
                    })
                }
                Some(Err(tok)) => return Err(Error::InvalidSample(tok)),
                Some(Ok(v)) if v > 255 => return Err(Error::InvalidSample(v.to_string())),
                Some(Ok(v)) => pixels.push(v as u8),
            }
        }
        pixels
    };
    GrayImage::new(header.width, header.height, pixels)
}

/// Encodes an image as P5 (`binary`) or P2.
pub fn encode_pgm(img: &GrayImage, binary: bool) -> Vec<u8> {
    let magic = if binary { "P5" } else { "P2" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    if binary {
        out.extend_from_slice(img.pixels());
    } else {
        // netpbm recommends lines of at most 70 characters
        for row in img.pixels().chunks(img.width()) {
            for line in row.chunks(17) {
                let text: Vec<String> = line.iter().map(|v| v.to_string()).collect();
                out.extend_from_slice(text.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&data)
}

pub fn save_pgm(img: &GrayImage, path: impl AsRef<Path>, binary: bool) -> Result<()> {
    write_atomic(path.as_ref(), &encode_pgm(img, binary))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers see either the old file, no file, or the full new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decode_p5() {
        let mut data = b"P5 2 2 255\n".to_vec();
        data.extend_from_slice(&[0, 255, 17, 42]);
        let img = decode_pgm(&data).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.pixels(), &[0, 255, 17, 42]);
    }

    #[test]
    fn decode_p2_equals_p5() {
        let p2 = b"P2\n# a comment\n2 2\n255\n0 255\n17 42\n";
        let mut p5 = b"P5 2 2 255\n".to_vec();
        p5.extend_from_slice(&[0, 255, 17, 42]);
        assert_eq!(decode_pgm(p2).unwrap(), decode_pgm(&p5).unwrap());
    }

    #[test]
    fn comment_inside_header() {
        let mut data = b"P5\n# made by hand\n2 # width done\n1\n255\n".to_vec();
        data.extend_from_slice(&[9, 10]);
        assert_eq!(decode_pgm(&data).unwrap().pixels(), &[9, 10]);
    }

    #[test]
    fn binary_payload_may_start_with_whitespace_byte() {
        let mut data = b"P5 2 1 255\n".to_vec();
        data.extend_from_slice(&[b' ', b'\n']);
        assert_eq!(decode_pgm(&data).unwrap().pixels(), &[32, 10]);
    }

    #[test]
    fn rejects_p6() {
        let err = decode_pgm(b"P6 1 1 255\n\0\0\0").unwrap_err();
        assert!(matches!(err, Error::UnsupportedMagic(_)));
        assert!(err.to_string().contains("unsupported magic"));
    }

    #[test]
    fn rejects_maxval() {
        let err = decode_pgm(b"P2 1 1 65535\n0\n").unwrap_err();
        assert!(matches!(err, Error::UnsupportedMaxval(65535)));
    }

    #[test]
    fn rejects_truncated() {
        let mut data = b"P5 2 2 255\n".to_vec();
        data.extend_from_slice(&[1, 2, 3]);
        assert!(matches!(
            decode_pgm(&data),
            Err(Error::TruncatedPayload {
                expected: 4,
                found: 3
            })
        ));
        assert!(matches!(
            decode_pgm(b"P2 2 2 255\n1 2 3\n"),
            Err(Error::TruncatedPayload { .. })
        ));
    }

    #[test]
    fn rejects_bad_ascii_sample() {
        assert!(matches!(
            decode_pgm(b"P2 1 1 255\n300\n"),
            Err(Error::InvalidSample(_))
        ));
    }

    #[test]
    fn missing_file_is_distinct() {
        let err = load_pgm("/nonexistent/dir/x.pgm").unwrap_err();
        assert!(matches!(err, Error::MissingFile { .. }));
    }

    #[test]
    fn ascii_header_prefix() {
        let img = GrayImage::filled(2, 2, 5);
        assert!(encode_pgm(&img, false).starts_with(b"P2"));
    }

    #[test]
    fn single_zero_pixel_payload() {
        let img = GrayImage::filled(1, 1, 0);
        let bytes = encode_pgm(&img, true);
        assert_eq!(bytes, b"P5\n1 1\n255\n\0");
        let ascii = encode_pgm(&img, false);
        assert_eq!(ascii, b"P2\n1 1\n255\n0\n");
    }

    #[test]
    fn file_round_trip_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(2, 2, |x, y| (x * 200 + y * 31) as u8);
        for binary in [true, false] {
            let path = dir.path().join(format!("img_{binary}.pgm"));
            save_pgm(&img, &path, binary).unwrap();
            assert_eq!(load_pgm(&path).unwrap(), img);
        }
    }
}
