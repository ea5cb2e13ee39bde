__package__ = 'onlinevis.reports'

from .csv import LOSS_COLUMNS, ABLATION_COLUMNS, embedding_columns, rows_to_csv, write_csv, read_csv        # noqa
from .json import write_json_report, write_resolved_config, write_metrics, write_gradcheck_report         # noqa
from .overlay import PALETTE, track_color, encode_ppm, decode_ppm, blend_masks, write_overlays             # noqa
