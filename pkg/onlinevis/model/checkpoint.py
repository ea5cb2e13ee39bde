__package__ = 'onlinevis.model'

from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

from ..config.common import ModelConfig, LossConfig
from ..config.version import VERSION
from ..misc.errors import FormatError
from ..tensorcore import RngState
from ..tensorcore.serialization import save_checkpoint, load_checkpoint
from .network import OnlineVISModel


def save_model(model: OnlineVISModel, out_dir: Union[Path, str], iteration: int=0, extra: Optional[Dict[str, Any]]=None) -> Path:
    metadata = {
        'version': VERSION,
        'iteration': iteration,
        'num_parameters': model.num_parameters(),
        'model_config': model.model_config.to_dict(),
        'loss_config': model.loss_config.to_dict(),
        **(extra or {}),
    }
    return save_checkpoint(out_dir, model.state_dict(), metadata)


def load_model(checkpoint_dir: Union[Path, str], overrides: Optional[Dict[str, Any]]=None) -> Tuple[OnlineVISModel, Dict[str, Any]]:
    """
    Rebuild the model from the config stored next to the weights. Explicit
    overrides win; one that changes a tensor shape fails in load_state_dict.
    """
    state, metadata = load_checkpoint(checkpoint_dir)
    if 'model_config' not in metadata:
        raise FormatError('Checkpoint index has no model_config section', path=checkpoint_dir)

    model_config = ModelConfig(**{**metadata['model_config'], **(overrides or {})})
    loss_config = LossConfig(**metadata.get('loss_config', {}))
    model = OnlineVISModel(model_config, loss_config, RngState(0))
    model.load_state_dict(state)
    return model, metadata
