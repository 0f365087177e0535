"""
Output renderers for monitoring artifacts.
"""

from .heatmap_renderer import plot_training_scores, save_heatmap_png, save_heatmap_raster

__all__ = ['plot_training_scores', 'save_heatmap_png', 'save_heatmap_raster']
