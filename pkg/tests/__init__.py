"""md2hwpx test suite."""
