from pydantic_settings import BaseSettings

class Settings(BaseSettings):
    FLAVR_LOG_LEVEL: str = "INFO"
    FLAVR_THREADS: int = 1
    FLAVR_OUTPUT_ROOT: str = "runs"
    FLAVR_RUN_SLOW: int = 0
    FLAVR_SEND_TO_LOGFIRE: str = "if-token-present"

    model_config = {
        "env_file": ".env",
        "case_sensitive": True,
        "extra": "allow"
    }
        
settings = Settings()
