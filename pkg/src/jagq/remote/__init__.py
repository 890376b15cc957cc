"""Remote query service simulation: translator, grammar parser, wire format,
and the cached data-delivery service."""
