use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use lumistack_core::codec::{decode_depth_mm, decode_focus_map, decode_image, encode_png};
use lumistack_core::optics::focus_map_to_depth_map;
use lumistack_core::render::{extended_focus, refocus_at_point, view_at};
use lumistack_core::synth::{synthesize_stack, three_layer_scene, SynthesizedStack};
use lumistack_core::tomography::reconstruct_slab;
use lumistack_service::{router, Meta, Scene, CACHE_CONTROL, DEPTH_HEADER};
use tower::ServiceExt;

fn fixture() -> (SynthesizedStack, Arc<Scene>) {
    let scene = three_layer_scene(48, 32);
    let s = synthesize_stack(&scene, 9).unwrap();
    let dm = focus_map_to_depth_map(&s.true_focus, s.stack.meta(), None).unwrap();
    let slab = reconstruct_slab(&s.stack, &s.true_focus, &dm, 0.05, scene.aperture_scale, 9).unwrap();
    let svc = Scene::new(slab, s.true_focus.clone(), None).unwrap();
    (s, Arc::new(svc))
}

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

async fn get(scene: &Arc<Scene>, uri: &str) -> Reply {
    let res = router(scene.clone())
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

#[tokio::test]
async fn meta_echoes_the_slab() {
    let (_, scene) = fixture();
    let r = get(&scene, "/meta").await;
    assert_eq!(r.status, StatusCode::OK);
    let meta: Meta = serde_json::from_slice(&r.body).unwrap();
    assert_eq!((meta.width, meta.height, meta.u_samples, meta.num_labels), (48, 32, 9, 3));
    assert_eq!((meta.u_min, meta.u_max), (-4, 4));
    let depths: Vec<f64> = meta.labels.iter().map(|l| l.depth_m).collect();
    assert_eq!(depths, vec![1.0, 0.5, 1.0 / 3.0]);
    assert_eq!(r.headers["cache-control"], CACHE_CONTROL);
    assert_eq!(r.headers["access-control-allow-origin"], "*");
}

#[tokio::test]
async fn views_and_range() {
    let (s, scene) = fixture();
    let r = get(&scene, "/view/0").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.headers["content-type"], "image/png");
    let expect = encode_png(&extended_focus(&s.stack, &s.true_focus).unwrap()).unwrap();
    assert_eq!(r.body, expect);
    let r = get(&scene, "/view/-4").await;
    assert_eq!(r.body, encode_png(&view_at(scene.slab(), -4).unwrap()).unwrap());
    assert_eq!(get(&scene, "/view/5").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&scene, "/view/-5").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&scene, "/view/left").await.status, StatusCode::BAD_REQUEST);
    let missing = get(&scene, "/nothing/here").await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    assert_eq!(missing.headers["cache-control"], CACHE_CONTROL);
}

#[tokio::test]
async fn refocus_reports_depth() {
    let (s, scene) = fixture();
    for (x, y) in [(2, 2), (12, 10), (36, 25)] {
        let r = get(&scene, &format!("/refocus?x={x}&y={y}")).await;
        assert_eq!(r.status, StatusCode::OK);
        let direct = refocus_at_point(scene.slab(), &s.true_focus, x, y).unwrap();
        assert_eq!(r.body, encode_png(&direct.image).unwrap());
        let depth: f64 = r.headers[DEPTH_HEADER].to_str().unwrap().parse().unwrap();
        assert_eq!(depth, direct.depth_m);
    }
    assert_eq!(get(&scene, "/refocus?x=48&y=0").await.status, StatusCode::BAD_REQUEST);
    assert_eq!(get(&scene, "/refocus?x=1").await.status, StatusCode::BAD_REQUEST);
    assert_eq!(get(&scene, "/refocus?x=-1&y=2").await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn map_products() {
    let (s, scene) = fixture();
    let focus = get(&scene, "/focus.png").await;
    assert_eq!(decode_focus_map(&focus.body, 3).unwrap(), s.true_focus);
    let depth = get(&scene, "/depth.png").await;
    let (w, h, mm) = decode_depth_mm(&depth.body).unwrap();
    assert_eq!((w, h), (48, 32));
    for (p, &v) in mm.iter().enumerate() {
        let expect = [1000, 500, 333][s.true_focus.labels()[p] as usize - 1];
        assert_eq!(v, expect);
    }
    let ext = get(&scene, "/extended.png").await;
    assert_eq!(decode_image(&ext.body).unwrap().width(), 48);
    assert_eq!(ext.body, get(&scene, "/view/0").await.body);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_storm_matches_serial() {
    let (_, serial) = fixture();
    let uris: Vec<String> = (0..40)
        .map(|i| match i % 4 {
            0 => format!("/view/{}", i % 9 - 4),
            1 => format!("/refocus?x={}&y={}", i, i % 32),
            2 => "/depth.png".to_string(),
            _ => "/meta".to_string(),
        })
        .collect();
    let mut expect = Vec::new();
    for u in &uris {
        expect.push(get(&serial, u).await.body);
    }
    let (_, fresh) = fixture();
    let tasks: Vec<_> = uris
        .iter()
        .cloned()
        .map(|u| {
            let scene = fresh.clone();
            tokio::spawn(async move { get(&scene, &u).await.body })
        })
        .collect();
    for (task, want) in tasks.into_iter().zip(expect) {
        assert_eq!(task.await.unwrap(), want);
    }
    // idempotence
    assert_eq!(get(&fresh, "/view/3").await.body, get(&fresh, "/view/3").await.body);
}

#[tokio::test]
async fn static_viewer_files() {
    let (s, _) = fixture();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    std::fs::write(dir.join("index.html"), "<html>viewer</html>").unwrap();
    let scene = three_layer_scene(48, 32);
    let dm = focus_map_to_depth_map(&s.true_focus, s.stack.meta(), None).unwrap();
    let slab = reconstruct_slab(&s.stack, &s.true_focus, &dm, 0.05, scene.aperture_scale, 9).unwrap();
    let svc = Arc::new(Scene::new(slab, s.true_focus.clone(), None).unwrap().with_viewer_dir(Some(dir)));
    let r = get(&svc, "/").await;
    assert_eq!(r.body, b"<html>viewer</html>");
    assert_eq!(r.headers["content-type"], "text/html; charset=utf-8");
    assert_eq!(get(&svc, "/index.html").await.status, StatusCode::OK);
    assert_eq!(get(&svc, "/..%2Fsecret").await.status, StatusCode::NOT_FOUND);
}
