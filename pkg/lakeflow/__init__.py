"""Monthly water-balance modelling and level control for a chain of five lakes."""
