"""RA-TLS: bind TLS endpoints to (simulated) SGX enclaves via X.509 evidence extensions."""
