"""A-manifold metrics on principal torus bundles over products of CP^n."""
