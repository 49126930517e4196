use super::{canonicalize, mesh_volume, MeshError, TriangleMesh};
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

#[derive(Debug, Clone)]
struct Entry {
    mesh: TriangleMesh,
    volume_ml: f64,
}

/// Reference models keyed by food label, canonicalized to rest on `Z = 0`
/// with their known volumes precomputed. Read-only after construction.
#[derive(Debug, Clone, Default)]
pub struct MeshDb {
    entries: BTreeMap<String, Entry>,
}

impl MeshDb {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads every `<label>.obj` in `dir`. `unit_scale` optionally maps a
    /// label to a multiplier converting file units to centimetres.
    pub fn load_dir(dir: &Path, unit_scale: &HashMap<String, f64>) -> Result<Self, MeshError> {
        let read = std::fs::read_dir(dir).map_err(|source| MeshError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        let mut paths: Vec<_> = read
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("obj")))
            .collect();
        paths.sort();
        let mut db = Self::new();
        for path in paths {
            let mesh = TriangleMesh::load(&path)?;
            let scale = unit_scale.get(mesh.label()).copied().unwrap_or(1.0);
            let mesh = mesh.scaled(scale)?;
            if let Err(e) = db.insert(mesh) {
                log::warn!("skipping {}: {e}", path.display());
            }
        }
        for label in unit_scale.keys() {
            if !db.entries.contains_key(label) {
                return Err(MeshError::Database(format!(
                    "unit multiplier given for `{label}` but no {label}.obj in {}",
                    dir.display()
                )));
            }
        }
        Ok(db)
    }

    /// Canonicalizes and registers `mesh` under its label. Fails when the
    /// mesh has no well-defined volume.
    pub fn insert(&mut self, mesh: TriangleMesh) -> Result<(), MeshError> {
        let volume_ml = mesh_volume(&mesh)?;
        let mesh = canonicalize(&mesh);
        self.entries
            .insert(mesh.label().to_string(), Entry { mesh, volume_ml });
        Ok(())
    }

    pub fn get(&self, label: &str) -> Option<(&TriangleMesh, f64)> {
        self.entries.get(label).map(|e| (&e.mesh, e.volume_ml))
    }

    pub fn contains(&self, label: &str) -> bool {
        self.entries.contains_key(label)
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
