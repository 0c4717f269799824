from contextlib import asynccontextmanager
from dotenv import load_dotenv
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from api.database import init_db
from api.routers import runs, schemes, solve

load_dotenv()


@asynccontextmanager
async def lifespan(app: FastAPI):
    init_db()  # Create tables on startup
    yield


app = FastAPI(title="GRRM API", lifespan=lifespan)
# Local notebooks and dashboards
origins = ["http://localhost:3000", "http://127.0.0.1:3000"]

app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)
app.include_router(solve.router, prefix="/solve")
app.include_router(schemes.router, prefix="/schemes")
app.include_router(runs.router, prefix="/runs")
