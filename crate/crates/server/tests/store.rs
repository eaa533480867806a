use dw_core::consult::start_session;
use dw_core::fixtures;
use dw_core::schema::{FeatureVector, SchemaLibrary};
use dw_server::store::{SessionStore, StoreError, LIBRARY_FILE, SESSIONS_DIR};

#[test]
fn open_seeds_library() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    assert!(dir.path().join(LIBRARY_FILE).exists());
    assert_eq!(store.library().to_document(), SchemaLibrary::builtin().to_document());
    assert!(store.list().unwrap().is_empty());
}

#[test]
fn save_load_and_list() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    let lib = store.library().clone();
    let mut ids = Vec::new();
    for _ in 0..5 {
        let mut s = start_session(FeatureVector::new(), &lib).unwrap();
        s.provide_bindings(fixtures::outcome_bindings(), &lib).unwrap();
        store.save(&s).unwrap();
        assert_eq!(store.load(&s.id).unwrap(), s);
        ids.push(s.id);
    }
    ids.sort();
    assert_eq!(store.list().unwrap(), ids);
    // only finished documents remain, no temporaries
    let files = std::fs::read_dir(dir.path().join(SESSIONS_DIR)).unwrap().count();
    assert_eq!(files, 5);
}

#[test]
fn unknown_and_corrupt_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    assert!(matches!(store.load("nope"), Err(StoreError::NotFound(_))));
    assert!(matches!(store.load("../schemas"), Err(StoreError::NotFound(_))));
    std::fs::write(dir.path().join(SESSIONS_DIR).join("bad.json"), "{").unwrap();
    assert!(matches!(store.load("bad"), Err(StoreError::Corrupt { .. })));
}

#[test]
fn custom_library_is_kept() {
    let dir = tempfile::tempdir().unwrap();
    let mut lib = SchemaLibrary::builtin();
    lib.schemas.retain(|s| s.id == "outcome");
    std::fs::write(dir.path().join(LIBRARY_FILE), lib.to_json()).unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    assert_eq!(store.library().schemas.len(), 1);
}
