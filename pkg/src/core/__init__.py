"""Dataset handling, random projections and the privatization engine."""
