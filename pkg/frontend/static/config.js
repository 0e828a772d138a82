window.MUSTER_DATA_SOURCE = "live";
