//! Reference embedding database, instance resolution and the on-disk format.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "IRDB" | version u16 | grid u16 | dim u32 | count u32
//! per entry:
//!   uuid [u8; 16] | class u8 | label_len u16 | label utf-8
//!   added_at_ms u64 | grid*grid*dim f32
//! ```

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::io::{Read, Write};

use uuid::Uuid;

use crate::perception::DeviceClass;
use crate::protocol::Frame;

use super::{scene_similarity, Embedder, InstanceError, PatchEmbedding};

pub const DB_MAGIC: &[u8; 4] = b"IRDB";
pub const DB_VERSION: u16 = 1;
pub const QUERY_MAGIC: &[u8; 4] = b"IREM";

/// Lookup of registered devices, used to validate inserts.
pub trait DeviceDirectory {
    fn device_class(&self, uuid: &Uuid) -> Option<DeviceClass>;
}

impl<F: Fn(&Uuid) -> Option<DeviceClass>> DeviceDirectory for F {
    fn device_class(&self, uuid: &Uuid) -> Option<DeviceClass> {
        self(uuid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEntry {
    pub embedding: PatchEmbedding,
    pub device_uuid: Uuid,
    pub class: DeviceClass,
    pub label: String,
    pub added_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedMatch {
    pub entry_index: usize,
    pub device_uuid: Uuid,
    pub class: DeviceClass,
    pub label: String,
    pub added_at_ms: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolution {
    pub device_uuid: Uuid,
    pub score: f64,
    /// Candidates by descending score; ties go to the newer entry, then the
    /// lower index.
    pub ranked: Vec<RankedMatch>,
    /// Whether the search was limited to the hinted class.
    pub scoped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDb {
    grid: usize,
    dim: usize,
    entries: Vec<ReferenceEntry>,
    class_index: BTreeMap<DeviceClass, Vec<usize>>,
}

impl EmbeddingDb {
    pub fn new(grid: usize, dim: usize) -> Self {
        Self {
            grid,
            dim,
            entries: Vec::new(),
            class_index: BTreeMap::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.grid, self.dim)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ReferenceEntry] {
        &self.entries
    }

    pub fn class_indices(&self, class: DeviceClass) -> &[usize] {
        self.class_index.get(&class).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Appends an entry whose device is known to exist.
    pub fn insert(&mut self, entry: ReferenceEntry) -> Result<usize, InstanceError> {
        if entry.embedding.shape() != self.shape() {
            return Err(InstanceError::ShapeMismatch {
                expected: self.shape(),
                found: format!("{:?}", entry.embedding.shape()),
            });
        }
        let idx = self.entries.len();
        self.class_index.entry(entry.class).or_default().push(idx);
        self.entries.push(entry);
        Ok(idx)
    }

    /// Inserts after checking the device against the directory. The entry's
    /// class is taken from the directory.
    pub fn add_embedding(
        &mut self,
        directory: &dyn DeviceDirectory,
        embedding: PatchEmbedding,
        device_uuid: Uuid,
        label: impl Into<String>,
        added_at_ms: u64,
    ) -> Result<usize, InstanceError> {
        let class = directory
            .device_class(&device_uuid)
            .ok_or(InstanceError::UnknownDevice(device_uuid))?;
        self.insert(ReferenceEntry {
            embedding,
            device_uuid,
            class,
            label: label.into(),
            added_at_ms,
        })
    }

    /// Scan-mode capture: embeds `frame` and stores it for `device_uuid`.
    pub fn add_reference(
        &mut self,
        directory: &dyn DeviceDirectory,
        frame: &Frame,
        embedder: &dyn Embedder,
        device_uuid: Uuid,
        label: impl Into<String>,
        added_at_ms: u64,
    ) -> Result<usize, InstanceError> {
        if directory.device_class(&device_uuid).is_none() {
            return Err(InstanceError::UnknownDevice(device_uuid));
        }
        let embedding = embedder.embed(frame);
        self.add_embedding(directory, embedding, device_uuid, label, added_at_ms)
    }

    /// Scores every candidate and returns the best device. With a class hint
    /// only that class's entries are searched, unless it has none.
    pub fn resolve_instance(
        &self,
        q: &PatchEmbedding,
        class_hint: Option<DeviceClass>,
    ) -> Result<Resolution, InstanceError> {
        if self.entries.is_empty() {
            return Err(InstanceError::EmptyDatabase);
        }
        let scoped_indices = class_hint
            .map(|c| self.class_indices(c))
            .filter(|idx| !idx.is_empty());
        let scoped = scoped_indices.is_some();
        let candidates: Vec<usize> = match scoped_indices {
            Some(idx) => idx.to_vec(),
            None => (0..self.entries.len()).collect(),
        };
        let mut ranked = candidates
            .into_iter()
            .map(|i| {
                let e = &self.entries[i];
                Ok(RankedMatch {
                    entry_index: i,
                    device_uuid: e.device_uuid,
                    class: e.class,
                    label: e.label.clone(),
                    added_at_ms: e.added_at_ms,
                    score: scene_similarity(q, &e.embedding)?,
                })
            })
            .collect::<Result<Vec<_>, InstanceError>>()?;
        ranked.sort_by(rank_order);
        let top = &ranked[0];
        Ok(Resolution {
            device_uuid: top.device_uuid,
            score: top.score,
            ranked,
            scoped,
        })
    }

    /// Copy holding only one class's entries, in their original order.
    pub fn class_subset(&self, class: DeviceClass) -> Self {
        let mut out = Self::new(self.grid, self.dim);
        for &i in self.class_indices(class) {
            out.insert(self.entries[i].clone())
                .expect("entries share the database shape");
        }
        out
    }

    pub fn remove_device(&mut self, device_uuid: &Uuid) -> usize {
        let before = self.entries.len();
        self.entries.retain(|e| &e.device_uuid != device_uuid);
        self.rebuild_index();
        before - self.entries.len()
    }

    fn rebuild_index(&mut self) {
        self.class_index.clear();
        for (i, e) in self.entries.iter().enumerate() {
            self.class_index.entry(e.class).or_default().push(i);
        }
    }

    /// Checks that the class index matches the entries exactly.
    pub fn index_is_consistent(&self) -> bool {
        let mut expected: BTreeMap<DeviceClass, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            expected.entry(e.class).or_default().push(i);
        }
        expected == self.class_index
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), InstanceError> {
        let grid = u16::try_from(self.grid).map_err(|_| InstanceError::Format("grid too large".into()))?;
        let dim = u32::try_from(self.dim).map_err(|_| InstanceError::Format("dim too large".into()))?;
        let count = u32::try_from(self.entries.len())
            .map_err(|_| InstanceError::Format("too many entries".into()))?;
        w.write_all(DB_MAGIC)?;
        w.write_all(&DB_VERSION.to_le_bytes())?;
        w.write_all(&grid.to_le_bytes())?;
        w.write_all(&dim.to_le_bytes())?;
        w.write_all(&count.to_le_bytes())?;
        for e in &self.entries {
            w.write_all(e.device_uuid.as_bytes())?;
            w.write_all(&[e.class.code()])?;
            let label = e.label.as_bytes();
            let len = u16::try_from(label.len())
                .map_err(|_| InstanceError::Format("label longer than 65535 bytes".into()))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(label)?;
            w.write_all(&e.added_at_ms.to_le_bytes())?;
            write_f32s(&mut w, e.embedding.data())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, InstanceError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DB_MAGIC {
            return Err(InstanceError::Format(format!("bad magic {magic:?}")));
        }
        let version = read_u16(&mut r)?;
        if version != DB_VERSION {
            return Err(InstanceError::Format(format!("unsupported version {version}")));
        }
        let grid = read_u16(&mut r)? as usize;
        let dim = read_u32(&mut r)? as usize;
        let count = read_u32(&mut r)?;
        let mut db = Self::new(grid, dim);
        for _ in 0..count {
            let mut uuid = [0u8; 16];
            r.read_exact(&mut uuid)?;
            let mut class = [0u8; 1];
            r.read_exact(&mut class)?;
            let class = DeviceClass::from_code(class[0])
                .ok_or_else(|| InstanceError::Format(format!("bad class code {}", class[0])))?;
            let len = read_u16(&mut r)? as usize;
            let mut label = vec![0u8; len];
            r.read_exact(&mut label)?;
            let label = String::from_utf8(label)
                .map_err(|_| InstanceError::Format("label is not UTF-8".into()))?;
            let mut added = [0u8; 8];
            r.read_exact(&mut added)?;
            let data = read_f32s(&mut r, grid * grid * dim)?;
            db.insert(ReferenceEntry {
                embedding: PatchEmbedding::new(grid, dim, data)?,
                device_uuid: Uuid::from_bytes(uuid),
                class,
                label,
                added_at_ms: u64::from_le_bytes(added),
            })?;
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(InstanceError::Format("trailing bytes after last entry".into()));
        }
        Ok(db)
    }
}

fn rank_order(a: &RankedMatch, b: &RankedMatch) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.added_at_ms.cmp(&a.added_at_ms))
        .then(a.entry_index.cmp(&b.entry_index))
}

/// Stores the last query as a new reference for the device the user says
/// was intended.
pub fn undo_correct(
    db: &mut EmbeddingDb,
    directory: &dyn DeviceDirectory,
    last_query: Option<&PatchEmbedding>,
    correct_device: Uuid,
    added_at_ms: u64,
) -> Result<usize, InstanceError> {
    let query = last_query.ok_or(InstanceError::NoPendingQuery)?;
    db.add_embedding(directory, query.clone(), correct_device, "correction", added_at_ms)
}

/// Single-embedding file: `"IREM" | version u16 | grid u16 | dim u32 | f32 data`.
pub fn write_query<W: Write>(mut w: W, q: &PatchEmbedding) -> Result<(), InstanceError> {
    w.write_all(QUERY_MAGIC)?;
    w.write_all(&DB_VERSION.to_le_bytes())?;
    let grid = u16::try_from(q.grid()).map_err(|_| InstanceError::Format("grid too large".into()))?;
    w.write_all(&grid.to_le_bytes())?;
    w.write_all(&(q.dim() as u32).to_le_bytes())?;
    write_f32s(&mut w, q.data())?;
    w.flush()?;
    Ok(())
}

pub fn read_query<R: Read>(mut r: R) -> Result<PatchEmbedding, InstanceError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != QUERY_MAGIC {
        return Err(InstanceError::Format(format!("bad magic {magic:?}")));
    }
    let version = read_u16(&mut r)?;
    if version != DB_VERSION {
        return Err(InstanceError::Format(format!("unsupported version {version}")));
    }
    let grid = read_u16(&mut r)? as usize;
    let dim = read_u32(&mut r)? as usize;
    let data = read_f32s(&mut r, grid * grid * dim)?;
    PatchEmbedding::new(grid, dim, data)
}

fn write_f32s<W: Write>(w: &mut W, data: &[f64]) -> std::io::Result<()> {
    let mut buf = Vec::with_capacity(data.len() * 4);
    for &v in data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)
}

fn read_f32s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, InstanceError> {
    let mut buf = vec![0u8; n * 4];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn read_u16<R: Read>(r: &mut R) -> std::io::Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uuid(n: u8) -> Uuid {
        Uuid::from_bytes([n; 16])
    }

    fn directory(uuid: &Uuid) -> Option<DeviceClass> {
        match uuid.as_bytes()[0] {
            1 | 2 => Some(DeviceClass::Blinds),
            3 => Some(DeviceClass::Tv),
            _ => None,
        }
    }

    fn unit(dim: usize, axis: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    fn emb(axes: &[usize]) -> PatchEmbedding {
        PatchEmbedding::new(2, 4, axes.iter().flat_map(|&a| unit(4, a)).collect()).unwrap()
    }

    #[test]
    fn single_entry_resolves_to_it() {
        let mut db = EmbeddingDb::new(2, 4);
        let r = emb(&[0, 1, 2, 3]);
        db.add_embedding(&directory, r.clone(), uuid(1), "a", 10).unwrap();
        let q = emb(&[0, 0, 1, 1]);
        let res = db.resolve_instance(&q, None).unwrap();
        assert_eq!(res.device_uuid, uuid(1));
        assert_eq!(res.score, scene_similarity(&q, &r).unwrap());
        assert!(!res.scoped);
    }

    #[test]
    fn empty_database() {
        let db = EmbeddingDb::new(2, 4);
        assert!(matches!(
            db.resolve_instance(&emb(&[0, 0, 0, 0]), None),
            Err(InstanceError::EmptyDatabase)
        ));
    }

    #[test]
    fn unknown_device_and_shape_checks() {
        let mut db = EmbeddingDb::new(2, 4);
        assert!(matches!(
            db.add_embedding(&directory, emb(&[0, 0, 0, 0]), uuid(9), "x", 0),
            Err(InstanceError::UnknownDevice(_))
        ));
        let wrong = PatchEmbedding::new(1, 4, unit(4, 0)).unwrap();
        assert!(matches!(
            db.add_embedding(&directory, wrong, uuid(1), "x", 0),
            Err(InstanceError::ShapeMismatch { .. })
        ));
        assert!(db.is_empty());
    }

    #[test]
    fn ties_prefer_most_recent() {
        let mut db = EmbeddingDb::new(2, 4);
        let e = emb(&[0, 1, 2, 3]);
        db.add_embedding(&directory, e.clone(), uuid(1), "old", 5).unwrap();
        db.add_embedding(&directory, e.clone(), uuid(2), "new", 9).unwrap();
        db.add_embedding(&directory, e.clone(), uuid(3), "same-time", 9).unwrap();
        let res = db.resolve_instance(&e, None).unwrap();
        let order: Vec<usize> = res.ranked.iter().map(|m| m.entry_index).collect();
        assert_eq!(order, vec![1, 2, 0]);
        assert_eq!(res.device_uuid, uuid(2));
    }

    #[test]
    fn class_hint_scopes_and_falls_back() {
        let mut db = EmbeddingDb::new(2, 4);
        db.add_embedding(&directory, emb(&[0, 0, 0, 0]), uuid(1), "b1", 0).unwrap();
        db.add_embedding(&directory, emb(&[1, 1, 1, 1]), uuid(3), "tv", 0).unwrap();
        let q = emb(&[1, 1, 1, 1]);
        let scoped = db.resolve_instance(&q, Some(DeviceClass::Blinds)).unwrap();
        assert!(scoped.scoped);
        assert_eq!(scoped.device_uuid, uuid(1));
        assert_eq!(scoped.ranked.len(), 1);
        let fallback = db.resolve_instance(&q, Some(DeviceClass::Speaker)).unwrap();
        assert!(!fallback.scoped);
        assert_eq!(fallback.device_uuid, uuid(3));
    }

    #[test]
    fn undo_correct_paths() {
        let mut db = EmbeddingDb::new(2, 4);
        assert!(matches!(
            undo_correct(&mut db, &directory, None, uuid(1), 0),
            Err(InstanceError::NoPendingQuery)
        ));
        let q = emb(&[3, 2, 1, 0]);
        db.add_embedding(&directory, emb(&[0, 0, 0, 0]), uuid(1), "b1", 0).unwrap();
        assert!(matches!(
            undo_correct(&mut db, &directory, Some(&q), uuid(7), 1),
            Err(InstanceError::UnknownDevice(_))
        ));
        undo_correct(&mut db, &directory, Some(&q), uuid(2), 1).unwrap();
        assert_eq!(db.len(), 2);
        let res = db.resolve_instance(&q, Some(DeviceClass::Blinds)).unwrap();
        assert_eq!(res.device_uuid, uuid(2));
        assert!((res.score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn index_stays_consistent() {
        let mut db = EmbeddingDb::new(2, 4);
        for i in 0..9u8 {
            db.add_embedding(&directory, emb(&[0, 1, 2, (i % 4) as usize]), uuid(1 + i % 3), "", i as u64)
                .unwrap();
            assert!(db.index_is_consistent());
        }
        assert_eq!(db.class_indices(DeviceClass::Tv), &[2, 5, 8]);
        assert_eq!(db.remove_device(&uuid(1)), 3);
        assert!(db.index_is_consistent());
        assert_eq!(db.class_indices(DeviceClass::Tv), &[1, 3, 5]);
    }

    #[test]
    fn file_round_trip() {
        let mut db = EmbeddingDb::new(2, 4);
        db.add_embedding(&directory, emb(&[0, 1, 2, 3]), uuid(1), "living room", 1234).unwrap();
        db.add_embedding(&directory, emb(&[3, 3, 1, 0]), uuid(3), "", u64::MAX).unwrap();
        let mut buf = Vec::new();
        db.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"IRDB");
        assert_eq!(&buf[4..6], &1u16.to_le_bytes());
        assert_eq!(&buf[6..8], &2u16.to_le_bytes());
        assert_eq!(&buf[8..12], &4u32.to_le_bytes());
        assert_eq!(&buf[12..16], &2u32.to_le_bytes());
        let entry_len = 16 + 1 + 2 + "living room".len() + 8 + 16 * 4;
        assert_eq!(buf.len(), 16 + entry_len + (entry_len - "living room".len()));
        let back = EmbeddingDb::read_from(&buf[..]).unwrap();
        assert_eq!(back, db);

        buf.push(0);
        assert!(matches!(EmbeddingDb::read_from(&buf[..]), Err(InstanceError::Format(_))));
        assert!(EmbeddingDb::read_from(&b"NOPE"[..]).is_err());
    }

    #[test]
    fn empty_db_keeps_shape() {
        let db = EmbeddingDb::new(4, 382);
        let mut buf = Vec::new();
        db.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16);
        assert_eq!(EmbeddingDb::read_from(&buf[..]).unwrap().shape(), (4, 382));
    }

    #[test]
    fn query_file_round_trip() {
        let q = emb(&[1, 2, 3, 0]);
        let mut buf = Vec::new();
        write_query(&mut buf, &q).unwrap();
        assert_eq!(read_query(&buf[..]).unwrap(), q);
    }
}
