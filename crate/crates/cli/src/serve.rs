use std::sync::Arc;

use sous_service::SessionStore;

use crate::common::{config_err, Failure};
use crate::ServeArgs;

pub fn cmd_serve(a: &ServeArgs) -> Result<(), Failure> {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let store = match &a.data {
        Some(dir) => SessionStore::open(dir).map_err(config_err)?,
        None => SessionStore::in_memory(),
    };
    let rt = tokio::runtime::Runtime::new().map_err(config_err)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.addr).await.map_err(config_err)?;
        let addr = listener.local_addr().map_err(config_err)?;
        tracing::info!(%addr, "listening");
        println!("listening on http://{addr}");
        sous_service::serve(listener, Arc::new(store))
            .await
            .map_err(|e| Failure::Scenario(e.to_string()))
    })
}
