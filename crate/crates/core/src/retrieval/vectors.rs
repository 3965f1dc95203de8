//! Binary vector file shared with the embedding tool: one JSON header line
//! `{"dim": d, "count": n, "normalized": bool}` followed by `n` records of
//! `(u16 LE id length, UTF-8 id, d × f32 LE)`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::RetrievalError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VectorHeader {
    pub dim: usize,
    pub count: usize,
    pub normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFile {
    pub dim: usize,
    pub normalized: bool,
    pub records: Vec<(String, Vec<f32>)>,
}

pub fn write_vector_file<W: Write>(mut w: W, file: &VectorFile) -> Result<(), RetrievalError> {
    let header = VectorHeader {
        dim: file.dim,
        count: file.records.len(),
        normalized: file.normalized,
    };
    serde_json::to_writer(&mut w, &header).map_err(|e| RetrievalError::Format(e.to_string()))?;
    w.write_all(b"\n")?;
    for (id, v) in &file.records {
        if v.len() != file.dim {
            return Err(RetrievalError::DimensionMismatch {
                expected: file.dim,
                found: v.len(),
            });
        }
        let len = u16::try_from(id.len())
            .map_err(|_| RetrievalError::Format(format!("id too long: {} bytes", id.len())))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id.as_bytes())?;
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_vector_file<R: BufRead>(mut r: R) -> Result<VectorFile, RetrievalError> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    let header: VectorHeader =
        serde_json::from_slice(&line).map_err(|e| RetrievalError::Format(format!("header: {e}")))?;
    let mut records = Vec::with_capacity(header.count);
    let mut buf = vec![0u8; header.dim * 4];
    for i in 0..header.count {
        let truncated = |e: std::io::Error| RetrievalError::Format(format!("record {i}: {e}"));
        let mut len = [0u8; 2];
        r.read_exact(&mut len).map_err(truncated)?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut id).map_err(truncated)?;
        let id = String::from_utf8(id)
            .map_err(|_| RetrievalError::Format(format!("record {i}: id is not UTF-8")))?;
        r.read_exact(&mut buf).map_err(truncated)?;
        let v = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        records.push((id, v));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(RetrievalError::Format("trailing bytes after last record".into()));
    }
    Ok(VectorFile {
        dim: header.dim,
        normalized: header.normalized,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            dim in 1usize..8,
            raw in prop::collection::vec(("[a-z0-9#/]{1,12}", prop::collection::vec(any::<u32>(), 8)), 0..10),
        ) {
            let records: Vec<(String, Vec<f32>)> = raw
                .into_iter()
                .map(|(id, bits)| (id, bits[..dim].iter().map(|b| f32::from_bits(*b)).collect()))
                .collect();
            let file = VectorFile { dim, normalized: false, records };
            let mut bytes = Vec::new();
            write_vector_file(&mut bytes, &file).unwrap();
            let back = read_vector_file(bytes.as_slice()).unwrap();
            prop_assert_eq!(back.records.len(), file.records.len());
            for ((ia, va), (ib, vb)) in back.records.iter().zip(&file.records) {
                prop_assert_eq!(ia, ib);
                let ba: Vec<u32> = va.iter().map(|x| x.to_bits()).collect();
                let bb: Vec<u32> = vb.iter().map(|x| x.to_bits()).collect();
                prop_assert_eq!(ba, bb);
            }
        }
    }

    #[test]
    fn truncated_file_rejected() {
        let file = VectorFile {
            dim: 2,
            normalized: false,
            records: vec![("a".into(), vec![1.0, 2.0])],
        };
        let mut bytes = Vec::new();
        write_vector_file(&mut bytes, &file).unwrap();
        bytes.pop();
        assert!(matches!(
            read_vector_file(bytes.as_slice()),
            Err(RetrievalError::Format(_))
        ));
    }
}
