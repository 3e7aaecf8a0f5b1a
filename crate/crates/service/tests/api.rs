mod common;

use axum::http::StatusCode;
use common::*;
use declutter_core::rle::CocoRle;
use declutter_core::segmentation::{ExternalConfig, SegmenterBackend, SyntheticMode};
use declutter_core::{BinaryMask, ImageTensor};
use declutter_service::{CleanView, SessionView, SuggestionsView};

fn session(reply: &Reply) -> SessionView {
    serde_json::from_slice(&reply.body).unwrap()
}

fn clutter_union(view: &SessionView) -> BinaryMask {
    view.elements
        .iter()
        .filter(|e| e.category == declutter_core::Category::Clutter)
        .fold(BinaryMask::zeros(view.height, view.width), |acc, e| acc.or(&e.mask.decode().unwrap()).unwrap())
}

#[tokio::test]
async fn health_check_answers() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&config(dir.path(), two_element_backend()));
    let reply = get(&app, "/healthz").await;
    assert_eq!(reply.status, StatusCode::OK);
    assert_eq!(reply.json()["status"], "ok");
}

#[tokio::test]
async fn override_then_clean_preserves_pixels_outside_the_selection_and_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), two_element_backend());
    let app = app(&cfg);

    let created = upload(&app, &scene_png()).await;
    assert_eq!(created.status, StatusCode::CREATED);
    let view = session(&created);
    assert_eq!(view.k, 2);
    let q: Vec<f64> = view.elements.iter().map(|e| e.q).collect();
    assert!((q[0] + q[1]).abs() < 1e-9, "two-element contributions cancel: {q:?}");

    let normal = view
        .elements
        .iter()
        .find(|e| e.category == declutter_core::Category::Normal)
        .map(|e| e.index)
        .unwrap();
    let uri = format!("/v1/sessions/{}/overrides", view.id);
    let overridden = post_json(&app, &uri, serde_json::json!({ "index": normal, "category": "clutter" })).await;
    assert_eq!(overridden.status, StatusCode::OK);
    let after = session(&overridden);
    assert!(after.elements.iter().all(|e| e.category == declutter_core::Category::Clutter));

    let cleaned = post_empty(&app, &format!("/v1/sessions/{}/clean", view.id)).await;
    assert_eq!(cleaned.status, StatusCode::OK);
    let clean: CleanView = serde_json::from_slice(&cleaned.body).unwrap();
    assert_eq!(clean.removed, vec![1, 2]);
    assert!((1..=5).contains(&clean.iterations_used));
    assert_eq!(clean.preview_url, format!("/v1/sessions/{}/preview.png", view.id));

    let preview = get(&app, &clean.preview_url).await;
    assert_eq!(preview.status, StatusCode::OK);
    assert_eq!(preview.content_type.as_deref(), Some("image/png"));
    let original = ImageTensor::decode(&scene_png()).unwrap().to_rgb8();
    let cleaned_img = ImageTensor::decode(&preview.body).unwrap().to_rgb8();
    let union = clutter_union(&after);
    let mut changed_inside = 0;
    for (x, y, px) in original.enumerate_pixels() {
        if union.get(y as usize, x as usize) {
            changed_inside += usize::from(px != cleaned_img.get_pixel(x, y));
        } else {
            assert_eq!(px, cleaned_img.get_pixel(x, y), "pixel ({y}, {x}) outside the selection changed");
        }
    }
    assert!(changed_inside > 0);

    let confidence = get(&app, clean.confidence_url.as_deref().unwrap()).await;
    assert_eq!(confidence.status, StatusCode::OK);

    let before_restart = get(&app, &format!("/v1/sessions/{}", view.id)).await;
    drop(app);
    let restarted = common::app(&cfg);
    let after_restart = get(&restarted, &format!("/v1/sessions/{}", view.id)).await;
    assert_eq!(after_restart.status, StatusCode::OK);
    assert_eq!(before_restart.json(), after_restart.json());
    assert_eq!(session(&before_restart), session(&after_restart));
    let preview_again = get(&restarted, &clean.preview_url).await;
    assert_eq!(preview_again.body, preview.body);
}

#[tokio::test]
async fn repeated_clean_is_byte_identical_and_flip_back_restores_selection() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&config(dir.path(), two_element_backend()));
    let view = session(&upload(&app, &scene_png()).await);
    let id = &view.id;
    let clean = |app| async move { post_empty(app, &format!("/v1/sessions/{id}/clean")).await };

    let first: CleanView = serde_json::from_slice(&clean(&app).await.body).unwrap();
    let preview1 = get(&app, &first.preview_url).await.body;
    let second: CleanView = serde_json::from_slice(&clean(&app).await.body).unwrap();
    let preview2 = get(&app, &second.preview_url).await.body;
    assert_eq!(first.removed, second.removed);
    assert_eq!(preview1, preview2);

    let clutter = view.elements.iter().find(|e| e.predicted_category == declutter_core::Category::Clutter);
    if let Some(element) = clutter {
        let uri = format!("/v1/sessions/{id}/overrides");
        post_json(&app, &uri, serde_json::json!({ "index": element.index, "category": "normal" })).await;
        let excluded: CleanView = serde_json::from_slice(&clean(&app).await.body).unwrap();
        assert!(!excluded.removed.contains(&element.index));
        post_json(&app, &uri, serde_json::json!({ "index": element.index, "category": "clutter" })).await;
        let restored: CleanView = serde_json::from_slice(&clean(&app).await.body).unwrap();
        assert_eq!(restored.removed, first.removed);
        assert_eq!(get(&app, &restored.preview_url).await.body, preview1);
    }
}

#[tokio::test]
async fn blank_image_has_no_elements_and_nothing_to_remove() {
    let dir = tempfile::tempdir().unwrap();
    let backend = SegmenterBackend::Synthetic(SyntheticMode::Foreground { tolerance: 0.08 });
    let app = app(&config(dir.path(), backend));
    let blank = ImageTensor::filled(40, 48, 0.5).unwrap().encode_png().unwrap();
    let view = session(&upload(&app, &blank).await);
    assert_eq!(view.k, 0);
    assert!(view.elements.is_empty());
    assert!(view.overall.is_none());

    let reply = post_empty(&app, &format!("/v1/sessions/{}/clean", view.id)).await;
    assert_eq!(reply.status, StatusCode::OK);
    assert_eq!(reply.json()["status"], "nothing-to-remove");
    assert_eq!(reply.json()["iterations_used"], 0);
    assert!(reply.json()["confidence_url"].is_null());
    let preview = get(&app, &format!("/v1/sessions/{}/preview.png", view.id)).await;
    assert_eq!(ImageTensor::decode(&preview.body).unwrap(), ImageTensor::decode(&blank).unwrap());
    let confidence = get(&app, &format!("/v1/sessions/{}/confidence.png", view.id)).await;
    assert_eq!(confidence.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn single_element_scene_has_zero_contribution() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&config(dir.path(), planted(vec![shape(1, 10, 10, 20, 20)])));
    let view = session(&upload(&app, &scene_png()).await);
    assert_eq!(view.k, 1);
    assert_eq!(view.elements[0].q, 0.0);
    assert_eq!(view.elements[0].category, declutter_core::Category::Normal);
    assert_eq!(view.elements[0].mask, CocoRle::encode(&BinaryMask::rect(SIDE, SIDE, 10, 10, 20, 20)));
}

#[tokio::test]
async fn identical_uploads_get_distinct_ids_and_identical_elements() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&config(dir.path(), two_element_backend()));
    let a = session(&upload(&app, &scene_png()).await);
    let b = session(&upload(&app, &scene_png()).await);
    assert_ne!(a.id, b.id);
    assert_eq!(a.elements, b.elements);
}

#[tokio::test]
async fn error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&config(dir.path(), two_element_backend()));
    assert_eq!(get(&app, "/v1/sessions/doesnotexist").await.status, StatusCode::NOT_FOUND);
    assert_eq!(post_empty(&app, "/v1/sessions/doesnotexist/clean").await.status, StatusCode::NOT_FOUND);
    assert_eq!(upload(&app, b"not an image").await.status, StatusCode::BAD_REQUEST);

    let view = session(&upload(&app, &scene_png()).await);
    let uri = format!("/v1/sessions/{}/overrides", view.id);
    let bad = post_json(&app, &uri, serde_json::json!({ "index": 99, "category": "clutter" })).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    assert!(bad.json()["error"].as_str().unwrap().contains("99"));
    let unchanged = session(&get(&app, &format!("/v1/sessions/{}", view.id)).await);
    assert!(unchanged.overrides.is_empty());
    assert_eq!(unchanged.updated_at, view.updated_at);

    let bad_suggestion = get(&app, &format!("/v1/sessions/{}/elements/0/suggestions", view.id)).await;
    assert_eq!(bad_suggestion.status, StatusCode::BAD_REQUEST);
    let no_preview = get(&app, &format!("/v1/sessions/{}/preview.png", view.id)).await;
    assert_eq!(no_preview.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unreachable_segmentation_backend_is_503() {
    let dir = tempfile::tempdir().unwrap();
    let backend = SegmenterBackend::ExternalModel(ExternalConfig { url: "http://127.0.0.1:9/segment".into(), timeout_secs: 2 });
    let app = app(&config(dir.path(), backend));
    let reply = upload(&app, &scene_png()).await;
    assert_eq!(reply.status, StatusCode::SERVICE_UNAVAILABLE);
}

#[tokio::test]
async fn suggestions_follow_size_and_position() {
    let dir = tempfile::tempdir().unwrap();
    let backend = planted(vec![shape(1, 0, 0, 4, 4), shape(1, 16, 16, 32, 32)]);
    let app = app(&config(dir.path(), backend));
    let view = session(&upload(&app, &scene_png()).await);
    let normal = view.elements.iter().find(|e| e.category == declutter_core::Category::Normal).unwrap();
    let uri = |i: usize| format!("/v1/sessions/{}/elements/{i}/suggestions", view.id);
    let none: SuggestionsView = serde_json::from_slice(&get(&app, &uri(normal.index)).await.body).unwrap();
    assert!(none.suggestions.is_empty());

    for i in 1..=2 {
        let body = serde_json::json!({ "index": i, "category": "clutter" });
        post_json(&app, &format!("/v1/sessions/{}/overrides", view.id), body).await;
    }
    let small: SuggestionsView = serde_json::from_slice(&get(&app, &uri(1)).await.body).unwrap();
    let kinds: Vec<String> = small
        .suggestions
        .iter()
        .map(|s| serde_json::to_value(s.kind).unwrap().as_str().unwrap().to_owned())
        .collect();
    assert_eq!(kinds.len(), 4, "{kinds:?}");
    assert!(kinds.contains(&"inpaint".to_owned()));
    let large: SuggestionsView = serde_json::from_slice(&get(&app, &uri(2)).await.body).unwrap();
    assert_eq!(large.suggestions.len(), 1);
    assert_eq!(serde_json::to_value(large.suggestions[0].kind).unwrap(), "inpaint");
}

#[tokio::test]
async fn store_files_follow_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&config(dir.path(), two_element_backend()));
    let view = session(&upload(&app, &scene_png()).await);
    post_empty(&app, &format!("/v1/sessions/{}/clean", view.id)).await;
    let session_dir = dir.path().join(&view.id);
    let record: serde_json::Value =
        serde_json::from_slice(&std::fs::read(session_dir.join("session.json")).unwrap()).unwrap();
    assert_eq!(record["format"], "declutter-session/1");
    assert_eq!(record["elements"][1]["mask"]["size"], serde_json::json!([64, 64]));
    assert!(record["elements"][1]["mask"]["counts"].is_string());
    assert!(record["assessment"]["contributions"].is_array());
    assert!(session_dir.join("original.png").is_file());
    assert!(session_dir.join("preview.png").is_file());
    let original = ImageTensor::decode(&std::fs::read(session_dir.join("original.png")).unwrap()).unwrap();
    assert_eq!(original, ImageTensor::decode(&scene_png()).unwrap());
}
