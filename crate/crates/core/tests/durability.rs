use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};

use dvspace::{DimensionDefinition, DomainDefinition, DomainVector, Store, UlRef};

const CHILD_ENV: &str = "DVS_DURABILITY_CHILD_DIR";

fn space() -> UlRef {
    UlRef::FullUrl("https://ds.example/journal".into())
}

fn definition() -> DomainDefinition {
    DomainDefinition::new(space(), "journal")
        .with(DimensionDefinition::integer("seq"))
        .with(DimensionDefinition::text("note"))
}

fn entry(i: i64) -> DomainVector {
    DomainVector::new(space(), vec![Some(i.into()), Some(format!("entry {i}").as_str().into())])
}

/// Writer half: only does work when started by `acknowledged_records_survive_kill`.
#[test]
fn child_writer() {
    let Ok(dir) = std::env::var(CHILD_ENV) else { return };
    let store = Store::open(&dir).unwrap();
    store.publish_definition(&definition()).unwrap();
    let mut out = std::io::stdout().lock();
    for i in 0.. {
        let id = if i % 3 == 0 {
            store.insert_dvs(vec![entry(i), entry(i + 1_000_000)], None).unwrap()[0]
        } else {
            store.insert_dv(entry(i)).unwrap()
        };
        writeln!(out, "ack {i} {id}").unwrap();
        out.flush().unwrap();
    }
}

#[test]
fn acknowledged_records_survive_kill() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(std::env::current_exe().unwrap())
        .args(["--exact", "child_writer", "--nocapture", "--test-threads", "1"])
        .env(CHILD_ENV, dir.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut acked = Vec::new();
    for line in BufReader::new(child.stdout.take().unwrap()).lines() {
        let line = line.unwrap();
        let Some(rest) = line.strip_prefix("ack ") else { continue };
        let mut it = rest.split(' ').map(|x| x.parse::<u64>().unwrap());
        acked.push((it.next().unwrap(), it.next().unwrap()));
        if acked.len() == 300 {
            child.kill().unwrap();
            break;
        }
    }
    child.wait().unwrap();
    assert_eq!(acked.len(), 300);

    let store = Store::open(dir.path()).unwrap();
    let snap = store.snapshot(&space()).unwrap();
    for (seq, id) in &acked {
        let rec = &snap.records()[*id as usize];
        assert_eq!(rec.dv.values, entry(*seq as i64).values, "record {id}");
        if seq % 3 == 0 {
            assert_eq!(snap.records()[*id as usize + 1].dv.values, entry(*seq as i64 + 1_000_000).values);
        }
    }
    for (i, r) in snap.records().iter().enumerate() {
        assert_eq!(r.id, i as u64);
    }
}

#[test]
fn torn_tail_is_dropped_on_open() {
    let dir = tempfile::tempdir().unwrap();
    {
        let s = Store::open(dir.path()).unwrap();
        s.publish_definition(&definition()).unwrap();
        for i in 0..5 {
            s.insert_dv(entry(i)).unwrap();
        }
    }
    let log = dir.path().join("spaces").join("0.log");
    let full = std::fs::metadata(&log).unwrap().len();
    {
        let mut f = std::fs::OpenOptions::new().append(true).open(&log).unwrap();
        f.write_all(&[40, 0, 0, 0, 1, 2, 3]).unwrap();
    }
    let s = Store::open(dir.path()).unwrap();
    assert_eq!(s.record_count(&space()).unwrap(), 5);
    assert_eq!(std::fs::metadata(&log).unwrap().len(), full);
    assert_eq!(s.insert_dv(entry(5)).unwrap(), 5);
    drop(s);
    let s = Store::open(dir.path()).unwrap();
    assert_eq!(s.snapshot(&space()).unwrap().records()[5].dv.values, entry(5).values);
}

#[test]
fn reopened_store_keeps_definitions_and_order() {
    let dir = tempfile::tempdir().unwrap();
    let other = UlRef::NumericHierarchic(vec![3, 1]);
    {
        let s = Store::open(dir.path()).unwrap();
        s.publish_definition(&DomainDefinition::new(other.clone(), "o").with(DimensionDefinition::integer("a")))
            .unwrap();
        s.publish_definition(&definition()).unwrap();
        s.publish_definition(&definition().appended([DimensionDefinition::integer("extra").into()])).unwrap();
        s.insert_dv(entry(1)).unwrap();
    }
    let s = Store::open(dir.path()).unwrap();
    let reg = s.registry();
    assert_eq!(reg.local_index(&other), Some(0));
    assert_eq!(reg.local_index(&space()), Some(1));
    assert_eq!(reg.versions(&space()).len(), 2);
    drop(reg);
    let snap = s.snapshot(&space()).unwrap();
    assert_eq!(snap.records()[0].version, 1);
}
