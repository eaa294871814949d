mod common;

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};

use common::*;
use vizcritique::backend::BackendError;
use vizcritique::ingest::ChartImage;
use vizcritique::pipeline::Backends;
use vizcritique::report::{deserialize_report, serialize_report};
use vizcritique::saliency::{SaliencyBackend, SaliencyMap, SpectralResidual};
use vizcritique::text::FixtureOcr;
use vizcritique::tracker::TrackerOutput;
use vizcritique_service::{FsStore, ProjectStore, RevisionRecord, RevisionStatus};

const WAIT: Duration = Duration::from_secs(60);

#[tokio::test]
async fn projects_crud_and_auth() {
    let h = harness();
    let r = send(&h.app, Request::get("/projects").body(Body::empty()).unwrap()).await;
    assert_eq!(r.status, StatusCode::UNAUTHORIZED);
    assert_eq!(
        send(&h.app, get("/projects", "nope")).await.status,
        StatusCode::UNAUTHORIZED
    );

    let a = create_project(&h.app, "My Chart").await;
    let b = create_project(&h.app, "My Chart").await;
    assert_ne!(a, b);
    let r = send(&h.app, post_json("/projects", TOKEN, "{\"name\": \"  \"}")).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.json()["error"], "validation");

    let r = send(&h.app, get("/projects", TOKEN)).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.content_type.as_deref(), Some("application/json"));
    let list = r.json();
    assert_eq!(list.as_array().unwrap().len(), 2);
    assert_eq!(list[0]["revisions"].as_array().unwrap().len(), 0);
    assert!(r.text().ends_with("}\n]\n"));

    // Another user sees nothing and cannot touch the projects.
    assert_eq!(
        send(&h.app, get("/projects", OTHER_TOKEN)).await.json(),
        serde_json::json!([])
    );
    let r = send(&h.app, get(&format!("/projects/{a}/revisions"), OTHER_TOKEN)).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    let del = |token: &str, id: &str| {
        Request::delete(format!("/projects/{id}"))
            .header("authorization", format!("Bearer {token}"))
            .body(Body::empty())
            .unwrap()
    };
    assert_eq!(send(&h.app, del(OTHER_TOKEN, &a)).await.status, StatusCode::NOT_FOUND);
    assert_eq!(send(&h.app, del(TOKEN, &a)).await.status, StatusCode::NO_CONTENT);
    assert_eq!(send(&h.app, del(TOKEN, &a)).await.status, StatusCode::NOT_FOUND);
    assert_eq!(
        send(&h.app, get("/projects", TOKEN))
            .await
            .json()
            .as_array()
            .unwrap()
            .len(),
        1
    );
}

#[tokio::test]
async fn upload_validation() {
    let h = harness();
    let p = create_project(&h.app, "Bounds").await;
    let tiny = ChartImage::filled(99, 99, [10, 20, 30]).to_png_bytes();
    let r = send(&h.app, upload(&p, TOKEN, "tiny.png", &tiny)).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["error"], "size");
    let r = send(&h.app, upload(&p, TOKEN, "chart.gif", &chart_png(300, 300, 1))).await;
    assert_eq!(r.json()["error"], "format");
    let r = send(&h.app, upload(&p, TOKEN, "chart.png", b"not a png")).await;
    assert_eq!(r.json()["error"], "decode");
    let r = send(&h.app, upload("0000", TOKEN, "chart.png", &chart_png(300, 300, 1))).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    // Nothing was persisted.
    assert_eq!(
        send(&h.app, get(&format!("/projects/{p}/revisions"), TOKEN))
            .await
            .json(),
        serde_json::json!([])
    );

    let missing_field = Request::post(format!("/projects/{p}/revisions"))
        .header("authorization", format!("Bearer {TOKEN}"))
        .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(format!("--{BOUNDARY}--\r\n")))
        .unwrap();
    assert_eq!(send(&h.app, missing_field).await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn upload_analyze_and_fetch() {
    let h = harness();
    let p = create_project(&h.app, "Flow").await;
    let r = send(&h.app, upload(&p, TOKEN, "chart.png", &chart_png(300, 300, 3))).await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.text());
    let rec: RevisionRecord = serde_json::from_slice(&r.body).unwrap();
    assert_eq!(rec.seq, 1);
    assert_eq!(rec.status, RevisionStatus::Queued);

    let done = h.state.service.wait_for(&p, 1, WAIT).unwrap();
    assert_eq!(done.status, RevisionStatus::Complete, "{:?}", done.error);
    let r = send(&h.app, get(&format!("/projects/{p}/revisions/1/report"), TOKEN)).await;
    assert_eq!(r.status, StatusCode::OK);
    let report = deserialize_report(&r.text()).unwrap();
    assert_eq!(serialize_report(&report), r.text());
    assert_eq!(report.sections.len(), 5);
    assert_eq!(report.revision_id, "1");
    assert_eq!(report.tracker, Some(TrackerOutput::first_version()));

    for a in report.artifacts() {
        let r = send(&h.app, get(&format!("/artifacts/{p}/1/{a}"), TOKEN)).await;
        assert_eq!(r.status, StatusCode::OK, "{a}");
        assert_eq!(r.content_type.as_deref(), Some("image/png"));
        assert!(r.body.starts_with(b"\x89PNG"));
    }
    let r = send(&h.app, get(&format!("/artifacts/{p}/1/image.png"), TOKEN)).await;
    assert_eq!(r.status, StatusCode::OK);
    for bad in ["1/report.json", "1/../1/image.png", "9/image.png", "x/image.png", "1"] {
        let r = send(&h.app, get(&format!("/artifacts/{p}/{bad}"), TOKEN)).await;
        assert_eq!(r.status, StatusCode::NOT_FOUND, "{bad}");
    }
    let r = send(&h.app, get(&format!("/artifacts/{p}/1/image.png"), OTHER_TOKEN)).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    let r = send(&h.app, get(&format!("/projects/{p}/revisions/7/report"), TOKEN)).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.json()["error"], "unknown_revision");
}

#[tokio::test]
async fn five_revisions_are_tracked() {
    let h = harness();
    let p = create_project(&h.app, "Iterations").await;
    for seed in 1..=5u64 {
        let r = send(&h.app, upload(&p, TOKEN, "chart.png", &chart_png(320, 240, seed))).await;
        assert_eq!(r.json()["seq"], seed);
    }
    for seq in 1..=5 {
        let rec = h.state.service.wait_for(&p, seq, WAIT).unwrap();
        assert_eq!(rec.status, RevisionStatus::Complete);
    }
    let timeline = send(&h.app, get(&format!("/projects/{p}/revisions"), TOKEN))
        .await
        .json();
    let seqs: Vec<u64> = timeline
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["seq"].as_u64().unwrap())
        .collect();
    assert_eq!(seqs, [1, 2, 3, 4, 5]);
    for seq in 2..=5u32 {
        let r = send(&h.app, get(&format!("/projects/{p}/revisions/{seq}/report"), TOKEN)).await;
        let report = deserialize_report(&r.text()).unwrap();
        match report.tracker {
            Some(TrackerOutput::Compared {
                previous_revision_id, ..
            }) => {
                assert_eq!(previous_revision_id, (seq - 1).to_string());
            }
            other => panic!("revision {seq}: {other:?}"),
        }
    }

    let r = send(&h.app, get(&format!("/projects/{p}/archive?a=1&b=3"), TOKEN)).await;
    assert_eq!(r.status, StatusCode::OK);
    let pair = r.json();
    assert_eq!(pair["a"]["revision_id"], "1");
    assert_eq!(pair["b"]["revision_id"], "3");
    let r = send(&h.app, get(&format!("/projects/{p}/archive?a=1&b=1"), TOKEN)).await;
    assert_eq!(r.json()["a"], r.json()["b"]);
    let r = send(&h.app, get(&format!("/projects/{p}/archive?a=1&b=99"), TOKEN)).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(r.json()["error"], "unknown_revision");
}

struct Gate {
    open: Mutex<bool>,
    cv: Condvar,
}

impl Gate {
    fn release(&self) {
        *self.open.lock().unwrap() = true;
        self.cv.notify_all();
    }
}

struct GatedSaliency(Arc<Gate>);

impl SaliencyBackend for GatedSaliency {
    fn id(&self) -> &str {
        "gated"
    }

    fn compute(&self, img: &ChartImage) -> Result<SaliencyMap, BackendError> {
        let mut open = self.0.open.lock().unwrap();
        while !*open {
            open = self.0.cv.wait(open).unwrap();
        }
        SpectralResidual::default().compute(img)
    }
}

#[tokio::test]
async fn unfinished_report_is_not_ready() {
    let gate = Arc::new(Gate {
        open: Mutex::new(false),
        cv: Condvar::new(),
    });
    let mut backends = Backends::stubs();
    backends.saliency = Arc::new(GatedSaliency(gate.clone()));
    let h = harness_with(backends, 1);
    let p = create_project(&h.app, "Slow").await;
    send(&h.app, upload(&p, TOKEN, "chart.png", &chart_png(200, 200, 1))).await;
    send(&h.app, upload(&p, TOKEN, "chart.png", &chart_png(200, 200, 2))).await;
    let r = send(&h.app, get(&format!("/projects/{p}/revisions/2/report"), TOKEN)).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
    assert_eq!(r.json()["error"], "not_ready");
    gate.release();
    assert_eq!(
        h.state.service.wait_for(&p, 2, WAIT).unwrap().status,
        RevisionStatus::Complete
    );
    assert_eq!(
        send(&h.app, get(&format!("/projects/{p}/revisions/2/report"), TOKEN))
            .await
            .status,
        StatusCode::OK
    );
}

#[tokio::test]
async fn backend_failure_marks_the_stage() {
    let mut backends = Backends::stubs();
    backends.ocr = Arc::new(FixtureOcr::failing());
    let h = harness_with(backends, 2);
    let p = create_project(&h.app, "Broken").await;
    send(&h.app, upload(&p, TOKEN, "chart.png", &chart_png(200, 200, 1))).await;
    let rec = h.state.service.wait_for(&p, 1, WAIT).unwrap();
    assert_eq!(rec.status, RevisionStatus::Failed);
    assert_eq!(rec.error.as_ref().unwrap().stage.as_str(), "text");
    // Partial artifacts are kept for debugging.
    let dir = h.state.service.store().revision_dir(&p, 1);
    assert!(dir.join("artifacts/heatmap.png").exists());
    let timeline = send(&h.app, get(&format!("/projects/{p}/revisions"), TOKEN))
        .await
        .json();
    assert_eq!(timeline[0]["status"], "failed");
    assert_eq!(timeline[0]["error"]["stage"], "text");
    let r = send(&h.app, get(&format!("/projects/{p}/revisions/1/report"), TOKEN)).await;
    assert_eq!(r.status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn concurrent_uploads_keep_sequences_contiguous() {
    let h = harness_with(Backends::stubs(), 2);
    let a = create_project(&h.app, "A").await;
    let b = create_project(&h.app, "B").await;
    let png = chart_png(150, 150, 4);
    let mut tasks = Vec::new();
    for i in 0..8 {
        let app = h.app.clone();
        let project = if i % 2 == 0 { a.clone() } else { b.clone() };
        let png = png.clone();
        tasks.push(tokio::spawn(async move {
            send(&app, upload(&project, TOKEN, "c.png", &png)).await.status
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::ACCEPTED);
    }
    for p in [&a, &b] {
        let seqs: Vec<u32> = h
            .state
            .service
            .list_revisions("u1", p)
            .unwrap()
            .iter()
            .map(|r| r.seq)
            .collect();
        assert_eq!(seqs, [1, 2, 3, 4]);
        for seq in 1..=4 {
            assert_eq!(
                h.state.service.wait_for(p, seq, WAIT).unwrap().status,
                RevisionStatus::Complete
            );
        }
    }
}

#[tokio::test]
async fn queued_revisions_resume_after_restart() {
    let dir = tempfile::tempdir().unwrap();
    let store = FsStore::open(dir.path()).unwrap();
    let project = vizcritique_service::Project {
        id: "p1".into(),
        owner: "u1".into(),
        name: "Crashed".into(),
        revisions: vec![],
        created_at: "2024-01-01T00:00:00Z".into(),
    };
    store.put_project(&project).unwrap();
    let rec = |seq: u32, status| RevisionRecord {
        id: format!("p1-r{seq}"),
        project_id: "p1".into(),
        seq,
        image_ref: "image.png".into(),
        report_ref: None,
        status,
        error: None,
        created_at: "2024-01-01T00:00:00Z".into(),
        updated_at: "2024-01-01T00:00:00Z".into(),
    };
    store
        .create_revision(&rec(1, RevisionStatus::Analyzing), &chart_png(200, 200, 1))
        .unwrap();
    store
        .create_revision(&rec(2, RevisionStatus::Queued), &chart_png(200, 200, 2))
        .unwrap();

    let analyzer = vizcritique::pipeline::Analyzer::new(Default::default(), Backends::stubs());
    let service = vizcritique_service::ProjectService::start(Arc::new(store), Arc::new(analyzer), 1).unwrap();
    let r1 = service.wait_for("p1", 1, WAIT).unwrap();
    assert_eq!(r1.status, RevisionStatus::Failed);
    let r2 = service.wait_for("p1", 2, WAIT).unwrap();
    assert_eq!(r2.status, RevisionStatus::Complete);
    assert_eq!(
        service.report("u1", "p1", 2).unwrap().tracker,
        Some(TrackerOutput::first_version())
    );
}

#[tokio::test]
async fn service_report_matches_direct_pipeline() {
    let h = harness();
    let p = create_project(&h.app, "Same").await;
    let png = chart_png(320, 240, 8);
    send(&h.app, upload(&p, TOKEN, "chart.png", &png)).await;
    assert_eq!(
        h.state.service.wait_for(&p, 1, WAIT).unwrap().status,
        RevisionStatus::Complete
    );
    let text = send(&h.app, get(&format!("/projects/{p}/revisions/1/report"), TOKEN))
        .await
        .text();
    let served = deserialize_report(&text).unwrap();

    let analyzer = vizcritique::pipeline::Analyzer::new(Default::default(), Backends::stubs());
    let request = vizcritique::pipeline::AnalysisRequest {
        revision_id: "1",
        created_at: &served.created_at,
        image_bytes: &png,
        format: "png",
    };
    let direct =
        vizcritique::pipeline::run_analysis(&request, None, &analyzer, &vizcritique::pipeline::MemorySink::new())
            .unwrap();
    assert_eq!(text, serialize_report(&direct));
}
