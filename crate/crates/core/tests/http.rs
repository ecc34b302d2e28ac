use std::sync::Arc;

use redynis::http::serve_http;
use redynis::{Cluster, ClusterTopology, NodeId, WallClock};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

struct Running {
    base: Vec<String>,
    stops: Vec<oneshot::Sender<()>>,
    tasks: Vec<tokio::task::JoinHandle<std::io::Result<()>>>,
}

async fn start(nodes: usize) -> (Arc<Cluster>, Running) {
    let topology = ClusterTopology::uniform(nodes, 0).unwrap();
    let cluster = Arc::new(Cluster::new(topology, Arc::new(WallClock), Default::default()));
    let mut running = Running {
        base: vec![],
        stops: vec![],
        tasks: vec![],
    };
    for i in 1..=nodes {
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        running.base.push(format!("http://{}", listener.local_addr().unwrap()));
        let (tx, rx) = oneshot::channel();
        let service = cluster.node(NodeId::numbered(i)).unwrap();
        running.stops.push(tx);
        running.tasks.push(tokio::spawn(serve_http(service, listener, async {
            let _ = rx.await;
        })));
    }
    (cluster, running)
}

async fn stop(running: Running) {
    for tx in running.stops {
        let _ = tx.send(());
    }
    for t in running.tasks {
        t.await.unwrap().unwrap();
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn put_then_get_locally_and_remotely() {
    let (_cluster, running) = start(2).await;
    let client = reqwest::Client::new();
    let (n1, n2) = (&running.base[0], &running.base[1]);

    let put = client
        .put(format!("{n1}/kv/greeting"))
        .body("hello")
        .send()
        .await
        .unwrap();
    assert_eq!(put.status(), 200);
    let body: serde_json::Value = put.json().await.unwrap();
    assert_eq!(body["path"], "created");

    let local = client.get(format!("{n1}/kv/greeting")).send().await.unwrap();
    assert_eq!(local.status(), 200);
    assert_eq!(local.headers()["x-remote"], "false");
    assert_eq!(local.bytes().await.unwrap().as_ref(), b"hello");

    let remote = client.get(format!("{n2}/kv/greeting")).send().await.unwrap();
    assert_eq!(remote.status(), 200);
    assert_eq!(remote.headers()["x-served-by"], "node-1");
    assert_eq!(remote.headers()["x-remote"], "true");
    assert_eq!(remote.bytes().await.unwrap().as_ref(), b"hello");

    let again = client.put(format!("{n1}/kv/greeting")).body("hi").send().await.unwrap();
    let body: serde_json::Value = again.json().await.unwrap();
    assert_eq!(body["path"], "local-only");
    stop(running).await;
}

#[tokio::test(flavor = "multi_thread")]
async fn metadata_health_and_missing_keys() {
    let (cluster, running) = start(3).await;
    let client = reqwest::Client::new();
    let n2 = &running.base[1];

    assert_eq!(
        client.get(format!("{n2}/kv/absent")).send().await.unwrap().status(),
        404
    );
    assert_eq!(
        client.get(format!("{n2}/meta/absent")).send().await.unwrap().status(),
        404
    );

    client.put(format!("{n2}/kv/k")).body("v").send().await.unwrap();
    client.get(format!("{}/kv/k", running.base[0])).send().await.unwrap();
    redynis::metadata::AccessSink::flush(cluster.recorder());
    let meta: serde_json::Value = client
        .get(format!("{n2}/meta/k"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(meta["hosts"], serde_json::json!(["node-2"]));
    assert_eq!(meta["totalAccessCount"], 1);
    assert_eq!(meta["hostAccesses"]["node-1"], 1);

    let h1: serde_json::Value = client
        .get(format!("{}/health", running.base[0]))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let h2: serde_json::Value = client
        .get(format!("{n2}/health"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(h1["role"], "serializer");
    assert_eq!(h2, serde_json::json!({"node": "node-2", "role": "replica"}));
    stop(running).await;
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_owner_is_a_gateway_error() {
    let (cluster, running) = start(2).await;
    let client = reqwest::Client::new();
    client
        .put(format!("{}/kv/k", running.base[0]))
        .body("v")
        .send()
        .await
        .unwrap();
    cluster.set_reachable(&NodeId::numbered(1), false);
    let resp = client.get(format!("{}/kv/k", running.base[1])).send().await.unwrap();
    assert_eq!(resp.status(), 502);
    stop(running).await;
}
