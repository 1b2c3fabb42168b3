# Core numerics, settings and persistence
