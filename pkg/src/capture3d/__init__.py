"""capture3d: select a zone in an image, isolate the objects inside it,
generate 3D meshes for them, simplify to a vertex budget and serve the
results as binary glTF assets."""

__version__ = "0.1.0"
