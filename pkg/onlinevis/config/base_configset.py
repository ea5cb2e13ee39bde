__package__ = 'onlinevis.config'

import os
import json
from pathlib import Path
from typing import Type, Tuple, Callable, ClassVar

from benedict import benedict
from pydantic import model_validator, TypeAdapter
from pydantic_settings import BaseSettings, SettingsConfigDict, PydanticBaseSettingsSource
from pydantic_settings.sources import JsonConfigSettingsSource

from ..misc.errors import ConfigurationError
from ..misc.util import func_takes_args_or_kwargs


CONFIG_FILE_ENV = 'ONLINEVIS_CONFIG_FILE'


class FlatJsonConfigSettingsSource(JsonConfigSettingsSource):
    """
    A source class that loads variables from a JSON config file,
    flattening one level of section nesting ({"MODEL": {"WIDTH": 32}} -> {"WIDTH": 32})
    """

    def __init__(
        self,
        settings_cls: type[BaseSettings],
        json_file: Path | None=None,
    ):
        self.json_file_path = json_file
        self.json_file_encoding = 'utf-8'

        try:
            self.nested_json_data = self._read_files(self.json_file_path)
        except json.JSONDecodeError as err:
            raise ConfigurationError(f'Config file {json_file} is not valid JSON: {err}')

        self.json_data = {}
        for top_level_key, top_level_value in self.nested_json_data.items():
            if isinstance(top_level_value, dict):
                # value is nested, flatten it
                for key, value in top_level_value.items():
                    self.json_data[key] = value
            else:
                # value is already flat, just set it as-is
                self.json_data[top_level_key] = top_level_value

        # filter json_data to only include keys that are defined on this settings_cls
        self.json_data = {
            key: value
            for key, value in self.json_data.items()
            if key in settings_cls.model_fields
        }

        super(JsonConfigSettingsSource, self).__init__(settings_cls, self.json_data)


class BaseConfigSet(BaseSettings):
    """
    This is the base class for an onlinevis ConfigSet.
    It handles loading values from schema defaults, the JSON config file, environment variables and explicit overrides.

    class ModelConfig(BaseConfigSet):
        WIDTH: int = Field(default=lambda c: PRESETS[c.PRESET]['WIDTH'])

    c = ModelConfig(PRESET='paper')
    print(c.WIDTH)                          # outputs: 256

    c = ModelConfig(WIDTH=32)               # explicit keyword overrides win over env and config file
    print(c.WIDTH)                          # outputs: 32
    """

    model_config = SettingsConfigDict(
        validate_default=False,
        case_sensitive=True,
        extra="ignore",
        arbitrary_types_allowed=False,
        populate_by_name=True,
        from_attributes=True,
        loc_by_alias=False,
        validate_assignment=True,
        validate_return=True,
        revalidate_instances="always",
    )

    load_from_configfile: ClassVar[bool] = True
    load_from_environment: ClassVar[bool] = True

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        """Defines the config precedence order: Explicit overrides -> Environment variables -> JSON config file -> Schema defaults"""

        precedence_order = {
            'overrides': init_settings,
            'environment': env_settings,
        }

        config_file = os.environ.get(CONFIG_FILE_ENV)
        if config_file:
            config_path = Path(config_file).expanduser()
            if not config_path.is_file():
                raise ConfigurationError(f'Config file {config_path} does not exist', hints=(f'Unset {CONFIG_FILE_ENV} or pass an existing --config path',))
            precedence_order['configfile'] = FlatJsonConfigSettingsSource(settings_cls, json_file=config_path)

        if not cls.load_from_environment:
            precedence_order.pop('environment')
        if not cls.load_from_configfile:
            precedence_order.pop('configfile', None)

        return tuple(precedence_order.values())

    @model_validator(mode="after")
    def fill_defaults(self):
        """Populate any unset values using function provided as their default"""

        for key, field in self.model_fields.items():
            value = getattr(self, key)

            if isinstance(value, Callable):
                # if value is a function, execute it to get the actual value, passing existing config as a dict arg if expected
                if func_takes_args_or_kwargs(value):
                    # assemble dict of existing field values to pass to default factory functions
                    config_so_far = benedict(self.model_dump(include=set(self.model_fields.keys()), warnings=False))
                    computed_default = field.default(config_so_far)
                else:
                    # otherwise it's a pure function with no args, just call it
                    computed_default = field.default()

                # coerce/check to make sure default factory return value matches type annotation
                TypeAdapter(field.annotation).validate_python(computed_default)

                # set generated default value as final validated value
                setattr(self, key, computed_default)

        self.check_consistency()
        return self

    def check_consistency(self) -> None:
        """Cross-field checks, run once every default has been resolved"""
        return None

    def to_dict(self) -> dict:
        return self.model_dump(mode='json')
